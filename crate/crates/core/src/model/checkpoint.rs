//! `.gwck` checkpoints: a UTF-8 manifest of `key=value` lines terminated by
//! a blank line, followed by one raw tensor blob per parameter (weight then
//! bias) in layer order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{KernelKind, Network, NetworkConfig, TrainMode, CONV_STAGES};
use crate::error::{Error, Result};
use crate::tensor::{read_raw, write_raw};

pub const CHECKPOINT_FORMAT: &str = "gwck1";

fn layer_label(i: usize, name: &str) -> String {
    format!("layer {i} ({name})")
}

pub fn write_checkpoint<W: Write>(mut out: W, net: &Network) -> Result<()> {
    let cfg = net.config();
    let filters: Vec<String> = cfg.conv_filters.iter().map(usize::to_string).collect();
    let mut manifest = String::new();
    let mut put = |k: &str, v: String| {
        manifest.push_str(k);
        manifest.push('=');
        manifest.push_str(&v);
        manifest.push('\n');
    };
    put("format", CHECKPOINT_FORMAT.into());
    put("kernel_size", cfg.kernel_size.to_string());
    put("train_config", cfg.train_mode.to_string());
    put("kernel_kind", cfg.kernel_kind.to_string());
    put("first_layer_filters", cfg.first_layer_filters.to_string());
    put("conv_filters", filters.join(","));
    put("dense_hidden", cfg.dense_hidden.to_string());
    put("dropout_rate", cfg.dropout_rate.to_string());
    put("lambda_reg", cfg.lambda_reg.to_string());
    put("input_size", cfg.input_size.to_string());
    put("seed", net.seed().to_string());
    put("steps", net.steps().to_string());
    put("layers", net.layers().len().to_string());
    for (i, layer) in net.layers().iter().enumerate() {
        let mut desc = format!("{} trainable={}", layer.name(), layer.trainable);
        if let Some((w, b)) = layer.params() {
            desc.push_str(&format!(" weight={} bias={}", w.shape(), b.shape()));
        }
        put(&format!("layer.{i}"), desc);
    }
    manifest.push('\n');
    out.write_all(manifest.as_bytes())?;
    for layer in net.layers() {
        if let Some((w, b)) = layer.params() {
            write_raw(&mut out, w)?;
            write_raw(&mut out, b)?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut out, net)?;
    out.flush()?;
    Ok(())
}

fn manifest_err(message: impl Into<String>) -> Error {
    Error::Checkpoint { layer: "manifest".into(), message: message.into() }
}

fn parse_manifest<R: BufRead>(input: &mut R) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(manifest_err("missing blank line terminating the manifest"));
        }
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.is_empty() {
            return Ok(map);
        }
        let (k, v) = trimmed
            .split_once('=')
            .ok_or_else(|| manifest_err(format!("malformed manifest line {trimmed:?}")))?;
        map.insert(k.to_string(), v.to_string());
    }
}

fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = map.get(key).ok_or_else(|| manifest_err(format!("missing key {key}")))?;
    raw.parse().map_err(|_| manifest_err(format!("bad value {raw:?} for {key}")))
}

fn config_from_manifest(map: &BTreeMap<String, String>) -> Result<NetworkConfig> {
    let format: String = field(map, "format")?;
    if format != CHECKPOINT_FORMAT {
        return Err(manifest_err(format!("unsupported format {format:?}")));
    }
    let filters: Vec<usize> = field::<String>(map, "conv_filters")?
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| manifest_err(format!("bad conv_filters entry {s:?}"))))
        .collect::<Result<_>>()?;
    let conv_filters: [usize; CONV_STAGES - 1] = filters
        .try_into()
        .map_err(|_| manifest_err(format!("conv_filters needs {} entries", CONV_STAGES - 1)))?;
    Ok(NetworkConfig {
        kernel_size: field(map, "kernel_size")?,
        train_mode: field::<String>(map, "train_config")?.parse::<TrainMode>()?,
        first_layer_filters: field(map, "first_layer_filters")?,
        conv_filters,
        dense_hidden: field(map, "dense_hidden")?,
        dropout_rate: field(map, "dropout_rate")?,
        lambda_reg: field(map, "lambda_reg")?,
        kernel_kind: field::<String>(map, "kernel_kind")?.parse::<KernelKind>()?,
        input_size: field(map, "input_size")?,
    })
}

/// Reads a checkpoint. Any inconsistency yields an error naming the
/// offending layer; no partially loaded network is ever returned.
pub fn read_checkpoint<R: Read>(input: R) -> Result<Network> {
    let mut input = BufReader::new(input);
    let map = parse_manifest(&mut input)?;
    let config = config_from_manifest(&map)?;
    let seed: u64 = field(&map, "seed")?;
    let steps: u64 = field(&map, "steps")?;
    let mut net = Network::build(&config, seed)?;
    let layer_count: usize = field(&map, "layers")?;
    if layer_count != net.layers().len() {
        return Err(manifest_err(format!(
            "manifest lists {layer_count} layers, config builds {}",
            net.layers().len()
        )));
    }
    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        let label = layer_label(i, layer.name());
        let recorded: String = field(&map, &format!("layer.{i}"))?;
        if recorded.split_whitespace().next() != Some(layer.name()) {
            return Err(Error::Checkpoint { layer: label, message: format!("manifest describes {recorded:?}") });
        }
        let Some((w, b)) = layer.params_mut() else { continue };
        for (slot, what) in [(w, "weight"), (b, "bias")] {
            let blob = read_raw(&mut input)
                .map_err(|e| Error::Checkpoint { layer: label.clone(), message: format!("{what}: {e}") })?;
            if blob.shape() != slot.shape() {
                return Err(Error::Checkpoint {
                    layer: label,
                    message: format!("{what} shape {} does not match expected {}", blob.shape(), slot.shape()),
                });
            }
            *slot = blob;
        }
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(manifest_err(format!("{} trailing bytes after the last blob", rest.len())));
    }
    net.set_steps(steps);
    Ok(net)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    read_checkpoint(File::open(path)?)
}
