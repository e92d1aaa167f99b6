use std::fs;
use std::path::{Path, PathBuf};

use nilm_core::checkpoint::Checkpoint;
use nilm_core::data::{
    align_to_grid, load_channel, load_series_csv, normalize, rebalance_on_state, synth_household, synthesize_aggregate,
    write_channel, write_series_csv, AlignOptions, AlignedSegment, ApplianceSpec, SeriesChannel, SynthConfig,
};
use nilm_core::metrics;
use nilm_core::network::{Gradients, Network, NetworkConfig};
use nilm_core::training::{
    gradient_check_with, history_csv, train, AdamConfig, GradCheckOptions, GradCheckReport, TrainConfig,
};
use nilm_core::windowing::{disaggregate, make_windows, Scaling, WindowGeometry};
use nilm_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub const SYNTH_KEYS: &[(&str, &str)] = &[
    ("out_dir", "synth_house"),
    ("seed", "1"),
    ("days", "14"),
    ("start", "1303132929"),
    ("noise_sigma", "2"),
];

const HOUSE_KEYS: &[(&str, &str)] = &[
    ("house_dir", ""),
    // Channel files summed into the aggregate; when empty, `aggregate` is read instead.
    ("channels", ""),
    ("aggregate", "aggregate.dat"),
    ("period", "3"),
    ("max_gap", "60"),
];

const NETWORK_KEYS: &[(&str, &str)] = &[
    ("l_in", "800"),
    ("l_out", "100"),
    ("n_glu_stages", "3"),
    ("conv_channels", "100"),
    ("kernel_size", "4"),
    ("n_res_blocks", "2"),
    ("res_hidden", "50"),
    ("seed", "0"),
];

const TRAIN_ONLY_KEYS: &[(&str, &str)] = &[
    ("target_channel", ""),
    ("appliance", "fridge"),
    ("divisor", ""),
    ("on_threshold", ""),
    ("aggregate_divisor", "1000"),
    ("train_step", "5"),
    ("rebalance", "false"),
    ("p_target", "0.1"),
    ("rebalance_seed", "0"),
    ("batch_size", "32"),
    ("learning_rate", "0.001"),
    ("beta1", "0.9"),
    ("beta2", "0.999"),
    ("epsilon", "1e-8"),
    ("epochs", "10"),
    ("max_steps", "0"),
    ("shuffle_seed", "0"),
    ("validation_fraction", "0.1"),
    ("checkpoint", "model.ckpt"),
    ("history", "history.csv"),
];

const DISAGGREGATE_ONLY_KEYS: &[(&str, &str)] = &[
    ("checkpoint", "model.ckpt"),
    ("appliance", ""),
    ("step", "5"),
    ("output", "prediction.csv"),
    ("truth_channel", ""),
    ("truth_output", "truth.csv"),
    ("allow_train_house", "false"),
];

pub const EVALUATE_KEYS: &[(&str, &str)] = &[
    ("prediction", "prediction.csv"),
    ("truth", "truth.csv"),
    ("appliance", "fridge"),
    ("on_threshold", ""),
    ("period", "3"),
    ("output", "metrics.csv"),
];

const GRADCHECK_ONLY_KEYS: &[(&str, &str)] = &[
    ("samples", "600"),
    ("step", "1e-5"),
    ("sample_seed", "0"),
    ("input_seed", "0"),
    ("tolerance", "1e-5"),
    ("report", ""),
];

/// Keys and defaults accepted by `command`.
pub fn defaults(command: &str) -> Option<Vec<(&'static str, &'static str)>> {
    let parts: &[&[(&str, &str)]] = match command {
        "synth" => &[SYNTH_KEYS],
        "train" => &[HOUSE_KEYS, NETWORK_KEYS, TRAIN_ONLY_KEYS],
        "disaggregate" => &[HOUSE_KEYS, DISAGGREGATE_ONLY_KEYS],
        "evaluate" => &[EVALUATE_KEYS],
        "gradcheck" => {
            return Some(
                [
                    ("l_in", "64"),
                    ("l_out", "8"),
                    ("n_glu_stages", "3"),
                    ("conv_channels", "8"),
                    ("kernel_size", "4"),
                    ("n_res_blocks", "1"),
                    ("res_hidden", "50"),
                    ("seed", "0"),
                ]
                .into_iter()
                .chain(GRADCHECK_ONLY_KEYS.iter().copied())
                .collect(),
            );
        }
        _ => return None,
    };
    Some(parts.iter().flat_map(|p| p.iter().copied()).collect())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    let out = cfg.path("out_dir")?;
    let days: f64 = cfg.parse("days")?;
    if days.is_nan() || days <= 0.0 {
        return Err(CliError::Config(format!("days must be positive, got {days}")));
    }
    let synth = SynthConfig {
        start: cfg.parse("start")?,
        noise_sigma: cfg.parse("noise_sigma")?,
        ..SynthConfig::days(days)
    };
    let house = synth_household(cfg.parse("seed")?, &synth).map_err(CliError::stage("synth"))?;
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;

    let mut labels = String::new();
    for (i, ch) in house.appliances().into_iter().enumerate() {
        let path = out.join(format!("channel_{}.dat", i + 1));
        write_channel(&path, ch).map_err(CliError::stage("write channel"))?;
        labels.push_str(&format!("{} {}\n", i + 1, ch.name()));
    }
    write_channel(out.join("aggregate.dat"), &house.aggregate).map_err(CliError::stage("write channel"))?;
    write_text(&out.join("labels.dat"), &labels)?;
    cfg.write_next_to(&out.join("synth"))?;
    Ok(format!(
        "wrote {} samples per channel to {}",
        house.aggregate.len(),
        out.display()
    ))
}

fn network_config(cfg: &RunConfig) -> Result<NetworkConfig> {
    let nc = NetworkConfig {
        l_in: cfg.parse("l_in")?,
        l_out: cfg.parse("l_out")?,
        n_glu_stages: cfg.parse("n_glu_stages")?,
        conv_channels: cfg.parse("conv_channels")?,
        kernel_size: cfg.parse("kernel_size")?,
        n_res_blocks: cfg.parse("n_res_blocks")?,
        res_hidden: cfg.parse("res_hidden")?,
        rng_seed: cfg.parse("seed")?,
    };
    nc.validate().map_err(CliError::stage("network"))?;
    Ok(nc)
}

fn appliance_spec(cfg: &RunConfig) -> Result<ApplianceSpec> {
    let name = cfg.str("appliance");
    let preset = ApplianceSpec::preset(name);
    let divisor = match (cfg.opt_str("divisor"), &preset) {
        (Some(_), _) => cfg.parse("divisor")?,
        (None, Some(p)) => p.divisor,
        (None, None) => {
            return Err(CliError::Config(format!(
                "appliance {name:?} has no preset; set divisor"
            )))
        }
    };
    let on_threshold = match (cfg.opt_str("on_threshold"), &preset) {
        (Some(_), _) => cfg.parse("on_threshold")?,
        (None, Some(p)) => p.on_threshold,
        (None, None) => {
            return Err(CliError::Config(format!(
                "appliance {name:?} has no preset; set on_threshold"
            )))
        }
    };
    ApplianceSpec::new(name, divisor, on_threshold).map_err(CliError::stage("appliance"))
}

/// One gap-free stretch of a house: the aggregate plus any extra channels, in watts.
struct Segment {
    start: i64,
    period: i64,
    aggregate: Vec<f64>,
    extras: Vec<Vec<f64>>,
}

struct HouseData {
    segments: Vec<Segment>,
}

fn load_house(cfg: &RunConfig, extra: &[String], min_len: usize) -> Result<HouseData> {
    let dir = cfg.path("house_dir")?;
    let summed = cfg.list("channels");
    let sources = if summed.is_empty() {
        vec![cfg.path("aggregate")?.to_string_lossy().into_owned()]
    } else {
        summed.clone()
    };
    let mut files: Vec<String> = sources.clone();
    for e in extra {
        if !files.contains(e) {
            files.push(e.clone());
        }
    }
    let loaded: Vec<nilm_core::Result<SeriesChannel>> = std::thread::scope(|s| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| {
                let path = dir.join(f);
                s.spawn(move || load_channel(path))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("loader thread panicked"))
            .collect()
    });
    let channels = loaded
        .into_iter()
        .collect::<nilm_core::Result<Vec<_>>>()
        .map_err(CliError::stage("load"))?;

    let opts = AlignOptions {
        period: cfg.parse("period")?,
        max_gap: cfg.parse("max_gap")?,
        min_len,
    };
    let aligned = align_to_grid(&channels, &opts).map_err(CliError::stage("align"))?;
    let index = |name: &String| files.iter().position(|f| f == name).unwrap();
    let segments = aligned
        .into_iter()
        .map(|seg: AlignedSegment| {
            let agg_parts: Vec<SeriesChannel> = sources.iter().map(|s| seg.channels[index(s)].clone()).collect();
            let aggregate = synthesize_aggregate(&agg_parts).map_err(CliError::stage("aggregate"))?;
            let extras = extra.iter().map(|e| seg.channels[index(e)].watts().to_vec()).collect();
            Ok(Segment {
                start: seg.start,
                period: seg.period,
                aggregate: aggregate.watts().to_vec(),
                extras,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if segments.is_empty() {
        return Err(CliError::Data {
            stage: "align",
            source: nilm_core::Error::SeriesTooShort { len: 0, l_out: min_len },
        });
    }
    Ok(HouseData { segments })
}

fn canonical_house(cfg: &RunConfig) -> Result<String> {
    let dir = cfg.path("house_dir")?;
    let abs = fs::canonicalize(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(abs.to_string_lossy().into_owned())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let nc = network_config(cfg)?;
    let spec = appliance_spec(cfg)?;
    let aggregate_divisor: f64 = cfg.parse("aggregate_divisor")?;
    if !(aggregate_divisor > 0.0 && aggregate_divisor.is_finite()) {
        return Err(CliError::Config(format!(
            "aggregate_divisor must be positive, got {aggregate_divisor}"
        )));
    }
    let target = cfg.path("target_channel")?.to_string_lossy().into_owned();
    let geom = WindowGeometry::new(nc.l_in, nc.l_out, cfg.parse("train_step")?).map_err(CliError::stage("windows"))?;
    let max_steps: usize = cfg.parse("max_steps")?;
    let tc = TrainConfig {
        batch_size: cfg.parse("batch_size")?,
        adam: AdamConfig {
            learning_rate: cfg.parse("learning_rate")?,
            beta1: cfg.parse("beta1")?,
            beta2: cfg.parse("beta2")?,
            epsilon: cfg.parse("epsilon")?,
        },
        epochs: cfg.parse("epochs")?,
        max_steps: (max_steps > 0).then_some(max_steps),
        shuffle_seed: cfg.parse("shuffle_seed")?,
        validation_fraction: cfg.parse("validation_fraction")?,
    };
    tc.validate().map_err(CliError::stage("train"))?;
    let rebalance = cfg.bool("rebalance")?;
    let p_target: f64 = cfg.parse("p_target")?;
    let checkpoint_path = cfg.path("checkpoint")?;
    let history_path = cfg.path("history")?;
    let source = canonical_house(cfg)?;

    let house = load_house(cfg, std::slice::from_ref(&target), nc.l_out)?;
    let mut pairs = Vec::new();
    for seg in &house.segments {
        let x = normalize(&seg.aggregate, aggregate_divisor);
        let y = normalize(&seg.extras[0], spec.divisor);
        pairs.extend(make_windows(&x, Some(&y), &geom).map_err(CliError::stage("windows"))?);
    }
    let n_windows = pairs.len();
    if rebalance {
        pairs = rebalance_on_state(pairs, p_target, &spec, cfg.parse("rebalance_seed")?)
            .map_err(CliError::stage("rebalance"))?;
    }

    let net = Network::build(nc).map_err(CliError::stage("network"))?;
    let outcome = train(net, &pairs, &tc).map_err(CliError::stage("train"))?;
    let ckpt = Checkpoint {
        network: outcome.network,
        appliance: spec,
        aggregate_divisor,
        train_source: Some(source),
    };
    ensure_parent(&checkpoint_path)?;
    ckpt.save(&checkpoint_path)
        .map_err(CliError::stage("save checkpoint"))?;
    write_text(&history_path, &history_csv(&outcome.history))?;
    cfg.write_next_to(&checkpoint_path)?;
    let last = outcome.history.last();
    Ok(format!(
        "trained on {} of {} windows, {} steps, best epoch {}, final train MAE {:.5}, val MAE {}",
        pairs.len(),
        n_windows,
        outcome.step_losses.len(),
        outcome.best_epoch,
        last.map_or(f64::NAN, |h| h.train_mae),
        last.and_then(|h| h.val_mae)
            .map_or("-".to_string(), |v| format!("{v:.5}")),
    ))
}

pub fn cmd_disaggregate(cfg: &RunConfig) -> Result<String> {
    let ckpt_path = cfg.path("checkpoint")?;
    let ckpt = Checkpoint::load(&ckpt_path).map_err(CliError::stage("load checkpoint"))?;
    if let Some(want) = cfg.opt_str("appliance") {
        if want != ckpt.appliance.name {
            return Err(CliError::Config(format!(
                "appliance {want:?} does not match checkpoint appliance {:?}",
                ckpt.appliance.name
            )));
        }
    }
    let source = canonical_house(cfg)?;
    if ckpt.train_source.as_deref() == Some(source.as_str()) && !cfg.bool("allow_train_house")? {
        return Err(CliError::Config(format!(
            "{source} is the house this checkpoint was trained on; pick another house or set allow_train_house"
        )));
    }
    let step: usize = cfg.parse("step")?;
    WindowGeometry::for_network(&ckpt.network, step).map_err(CliError::stage("windows"))?;
    let truth: Vec<String> = cfg.opt_str("truth_channel").map(String::from).into_iter().collect();
    let output = cfg.path("output")?;
    let truth_output = cfg.path("truth_output")?;

    let l_out = ckpt.network.config().l_out;
    let house = load_house(cfg, &truth, l_out)?;
    let scaling = Scaling {
        aggregate_divisor: ckpt.aggregate_divisor,
        appliance_divisor: ckpt.appliance.divisor,
    };
    let (mut ts, mut pred, mut true_w) = (Vec::new(), Vec::new(), Vec::new());
    for seg in &house.segments {
        let p = disaggregate(&ckpt.network, &seg.aggregate, scaling, step).map_err(CliError::stage("disaggregate"))?;
        ts.extend((0..seg.aggregate.len() as i64).map(|k| seg.start + k * seg.period));
        pred.extend(p);
        if let Some(t) = seg.extras.first() {
            true_w.extend_from_slice(t);
        }
    }
    let n = ts.len();
    let pred = SeriesChannel::new(ckpt.appliance.name.clone(), ts.clone(), pred).map_err(CliError::stage("output"))?;
    ensure_parent(&output)?;
    write_series_csv(&output, &pred).map_err(CliError::stage("write prediction"))?;
    if !truth.is_empty() {
        let t = SeriesChannel::new("truth", ts, true_w).map_err(CliError::stage("output"))?;
        ensure_parent(&truth_output)?;
        write_series_csv(&truth_output, &t).map_err(CliError::stage("write truth"))?;
    }
    cfg.write_next_to(&output)?;
    Ok(format!(
        "wrote {n} {} samples from {} segment(s) to {}",
        ckpt.appliance.name,
        house.segments.len(),
        output.display()
    ))
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<String> {
    let on_threshold = match cfg.opt_str("on_threshold") {
        Some(_) => cfg.parse("on_threshold")?,
        None => {
            ApplianceSpec::preset(cfg.str("appliance"))
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "appliance {:?} has no preset; set on_threshold",
                        cfg.str("appliance")
                    ))
                })?
                .on_threshold
        }
    };
    let period: f64 = cfg.parse("period")?;
    let pred = load_series_csv(cfg.path("prediction")?).map_err(CliError::stage("load prediction"))?;
    let truth = load_series_csv(cfg.path("truth")?).map_err(CliError::stage("load truth"))?;
    let m = metrics::evaluate(&pred, &truth, on_threshold, period).map_err(CliError::stage("evaluate"))?;
    let output = cfg.path("output")?;
    write_text(&output, &m.to_csv())?;
    cfg.write_next_to(&output)?;
    Ok(format!("MAE {:.3} W over {} samples", m.mae_w, m.samples))
}

/// Runs the check with a caller-supplied analytic gradient; the command uses
/// backpropagation, tests inject broken ones.
pub fn run_gradcheck(
    cfg: &RunConfig,
    analytic: impl Fn(&Network, &Tensor, &Tensor) -> nilm_core::Result<Gradients>,
) -> Result<(GradCheckReport, f64)> {
    let nc = network_config(cfg)?;
    let opts = GradCheckOptions {
        step: cfg.parse("step")?,
        samples: cfg.parse("samples")?,
        seed: cfg.parse("sample_seed")?,
    };
    let tolerance: f64 = cfg.parse("tolerance")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.parse("input_seed")?);
    let x = Tensor::from_vec((0..nc.l_in).map(|_| rng.gen::<f64>()).collect());
    let y = Tensor::from_vec((0..nc.l_out).map(|_| rng.gen::<f64>()).collect());
    let net = Network::build(nc).map_err(CliError::stage("network"))?;
    let report = gradient_check_with(&net, &x, &y, &opts, analytic).map_err(CliError::stage("gradcheck"))?;
    Ok((report, tolerance))
}

pub fn finish_gradcheck(cfg: &RunConfig, report: &GradCheckReport, tolerance: f64) -> Result<String> {
    let text = report.render();
    if let Some(path) = cfg.opt_str("report") {
        let path = PathBuf::from(path);
        write_text(&path, &text)?;
        cfg.write_next_to(&path)?;
    }
    if report.max_rel_error < tolerance {
        Ok(text)
    } else {
        Err(CliError::CheckFailed(format!(
            "max relative error {:.3e} >= {tolerance:e}\n{text}",
            report.max_rel_error
        )))
    }
}

pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<String> {
    let (report, tolerance) = run_gradcheck(cfg, nilm_core::training::analytic_gradient)?;
    finish_gradcheck(cfg, &report, tolerance)
}
