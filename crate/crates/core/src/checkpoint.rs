//! Trained-model files.
//!
//! Layout: an ASCII header of `key=value` lines opened by the magic line
//! `nilm-checkpoint` and closed by a line holding only `---`, followed by
//! every parameter as a little-endian `f64`, tensors in declaration order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::ApplianceSpec;
use crate::error::{Error, Result};
use crate::network::{Network, NetworkConfig, Parameters};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "nilm-checkpoint";
const END: &str = "---";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub appliance: ApplianceSpec,
    pub aggregate_divisor: f64,
    /// Where the training data came from, so evaluation can refuse to run on it.
    pub train_source: Option<String>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let check = |key: &str, v: &str| {
            if v.contains('\n') || v.contains('\r') {
                Err(Error::CheckpointHeader(format!("{key} must be a single line")))
            } else {
                Ok(())
            }
        };
        check("appliance", &self.appliance.name)?;
        if let Some(src) = &self.train_source {
            check("train_source", src)?;
        }

        let c = self.network.config();
        let params = self.network.params();
        let mut h = String::new();
        let _ = writeln!(h, "{MAGIC}");
        let _ = writeln!(h, "version={FORMAT_VERSION}");
        let _ = writeln!(h, "appliance={}", self.appliance.name);
        let _ = writeln!(h, "appliance_divisor={}", self.appliance.divisor);
        let _ = writeln!(h, "on_threshold={}", self.appliance.on_threshold);
        let _ = writeln!(h, "aggregate_divisor={}", self.aggregate_divisor);
        let _ = writeln!(h, "l_in={}", c.l_in);
        let _ = writeln!(h, "l_out={}", c.l_out);
        let _ = writeln!(h, "n_glu_stages={}", c.n_glu_stages);
        let _ = writeln!(h, "conv_channels={}", c.conv_channels);
        let _ = writeln!(h, "kernel_size={}", c.kernel_size);
        let _ = writeln!(h, "n_res_blocks={}", c.n_res_blocks);
        let _ = writeln!(h, "res_hidden={}", c.res_hidden);
        let _ = writeln!(h, "rng_seed={}", c.rng_seed);
        if let Some(src) = &self.train_source {
            let _ = writeln!(h, "train_source={src}");
        }
        let _ = writeln!(h, "param_count={}", params.num_scalars());
        let _ = writeln!(h, "{END}");

        let mut out = h.into_bytes();
        out.reserve(params.num_scalars() * 8);
        for t in params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header_err = |m: String| Error::CheckpointHeader(m);
        let (header, payload) = split_header(bytes)?;
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(header_err(format!("missing `{MAGIC}` magic line")));
        }
        let mut fields = Vec::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| header_err(format!("expected key=value, got {line:?}")))?;
            if fields.iter().any(|(key, _)| *key == k) {
                return Err(header_err(format!("duplicate key {k}")));
            }
            fields.push((k, v));
        }
        let get = |k: &str| {
            fields
                .iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| header_err(format!("missing key {k}")))
        };
        let version = get("version")?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::CheckpointVersion {
                found: version.to_string(),
                expected: FORMAT_VERSION,
            });
        }
        for (k, _) in &fields {
            if !KNOWN_KEYS.contains(k) {
                return Err(header_err(format!("unknown key {k}")));
            }
        }
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::CheckpointHeader(format!("bad value for {k}: {v:?}")))
        }
        let usize_key = |k: &str| get(k).and_then(|v| num::<usize>(k, v));
        let f64_key = |k: &str| get(k).and_then(|v| num::<f64>(k, v));

        let config = NetworkConfig {
            l_in: usize_key("l_in")?,
            l_out: usize_key("l_out")?,
            n_glu_stages: usize_key("n_glu_stages")?,
            conv_channels: usize_key("conv_channels")?,
            kernel_size: usize_key("kernel_size")?,
            n_res_blocks: usize_key("n_res_blocks")?,
            res_hidden: usize_key("res_hidden")?,
            rng_seed: get("rng_seed").and_then(|v| num::<u64>("rng_seed", v))?,
        };
        config.validate().map_err(|e| header_err(format!("config: {e}")))?;
        // Guard the allocation below against absurd headers.
        let expected = expected_scalars(&config)
            .ok_or_else(|| header_err("config implies an unrepresentable parameter count".into()))?;
        let declared = usize_key("param_count")?;
        if declared != expected {
            return Err(Error::CheckpointSize {
                expected: expected * 8,
                found: declared.saturating_mul(8),
            });
        }
        if payload.is_empty() {
            return Err(Error::CheckpointPayloadMissing);
        }
        if payload.len() != expected * 8 {
            return Err(Error::CheckpointSize {
                expected: expected * 8,
                found: payload.len(),
            });
        }
        let appliance = ApplianceSpec::new(
            get("appliance")?,
            f64_key("appliance_divisor")?,
            f64_key("on_threshold")?,
        )
        .map_err(|e| header_err(e.to_string()))?;
        let aggregate_divisor = f64_key("aggregate_divisor")?;
        if !(aggregate_divisor.is_finite() && aggregate_divisor > 0.0) {
            return Err(header_err(format!(
                "aggregate_divisor must be positive, got {aggregate_divisor}"
            )));
        }

        let mut params = Parameters::zeros(&config);
        let mut chunks = payload.chunks_exact(8);
        for t in params.tensors_mut() {
            for (v, c) in t.data_mut().iter_mut().zip(&mut chunks) {
                *v = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
            }
        }
        Ok(Self {
            network: Network::from_parameters(config, params)?,
            appliance,
            aggregate_divisor,
            train_source: fields
                .iter()
                .find(|(k, _)| *k == "train_source")
                .map(|(_, v)| v.to_string()),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "version",
    "appliance",
    "appliance_divisor",
    "on_threshold",
    "aggregate_divisor",
    "l_in",
    "l_out",
    "n_glu_stages",
    "conv_channels",
    "kernel_size",
    "n_res_blocks",
    "res_hidden",
    "rng_seed",
    "train_source",
    "param_count",
];

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let marker = format!("\n{END}\n");
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .ok_or_else(|| Error::CheckpointHeader("header is truncated (no `---` line)".into()))?;
    let header =
        std::str::from_utf8(&bytes[..end]).map_err(|_| Error::CheckpointHeader("header is not UTF-8".into()))?;
    Ok((header, &bytes[end + marker.len()..]))
}

/// Parameter count implied by a config, `None` on overflow.
fn expected_scalars(c: &NetworkConfig) -> Option<usize> {
    let conv = |c_in: usize| {
        c.conv_channels
            .checked_mul(c_in)?
            .checked_mul(c.kernel_size)?
            .checked_add(c.conv_channels)?
            .checked_mul(2)
    };
    let dense = |n_out: usize, n_in: usize| n_out.checked_mul(n_in)?.checked_add(n_out);
    let mut total = conv(1)?;
    for _ in 1..c.n_glu_stages {
        total = total.checked_add(conv(c.conv_channels)?)?;
    }
    let flat = c.conv_channels.checked_mul(c.l_in >> c.n_glu_stages)?;
    total = total.checked_add(dense(c.l_out, flat)?)?;
    let block = dense(c.res_hidden, c.l_out)?.checked_add(dense(c.l_out, c.res_hidden)?)?;
    total = total.checked_add(block.checked_mul(c.n_res_blocks)?)?;
    total.checked_add(dense(c.l_out, c.l_out)?)
}
