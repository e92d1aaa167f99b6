use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ApplianceSpec;
use crate::error::{Error, Result};
use crate::windowing::WindowPair;

/// A window is "on" when its peak target power exceeds the appliance threshold.
pub fn is_on(pair: &WindowPair, spec: &ApplianceSpec) -> Result<bool> {
    let y = pair.target()?;
    let peak = y.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(peak * spec.divisor > spec.on_threshold)
}

pub fn on_fraction(pairs: &[WindowPair], spec: &ApplianceSpec) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no window pairs"));
    }
    let mut on = 0usize;
    for p in pairs {
        on += is_on(p, spec)? as usize;
    }
    Ok(on as f64 / pairs.len() as f64)
}

/// Keep probability for off windows that makes the expected on proportion
/// equal `p_target`, capped at 1.
pub fn rebalance_keep_probability(n_on: usize, n_off: usize, p_target: f64) -> f64 {
    if n_off == 0 {
        return 1.0;
    }
    (n_on as f64 * (1.0 - p_target) / (p_target * n_off as f64)).min(1.0)
}

/// Keeps every on window and each off window independently with the
/// probability from [`rebalance_keep_probability`]. Order is preserved.
pub fn rebalance_on_state(
    pairs: Vec<WindowPair>,
    p_target: f64,
    spec: &ApplianceSpec,
    seed: u64,
) -> Result<Vec<WindowPair>> {
    if !(p_target > 0.0 && p_target < 1.0) {
        return Err(Error::Rebalance(format!("p_target must be in (0, 1), got {p_target}")));
    }
    let flags = pairs.iter().map(|p| is_on(p, spec)).collect::<Result<Vec<_>>>()?;
    let n_on = flags.iter().filter(|&&on| on).count();
    if n_on == 0 {
        return Err(Error::Rebalance(format!(
            "no {} windows above {} W",
            spec.name, spec.on_threshold
        )));
    }
    let q = rebalance_keep_probability(n_on, pairs.len() - n_on, p_target);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(pairs
        .into_iter()
        .zip(flags)
        .filter(|(_, on)| *on || rng.gen_bool(q))
        .map(|(p, _)| p)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn pair(pos: usize, peak_watts: f64, spec: &ApplianceSpec) -> WindowPair {
        WindowPair {
            x: Tensor::zeros(&[4]),
            y: Some(Tensor::from_vec(vec![0.0, peak_watts / spec.divisor])),
            pos,
        }
    }

    #[test]
    fn on_rule_uses_threshold_in_watts() {
        let spec = ApplianceSpec::dishwasher();
        assert!(is_on(&pair(0, 11.0, &spec), &spec).unwrap());
        assert!(!is_on(&pair(0, 10.0, &spec), &spec).unwrap());
    }

    #[test]
    fn keep_probability_formula() {
        let q = rebalance_keep_probability(100, 9900, 0.1);
        assert!((q - 900.0 / 9900.0).abs() < 1e-15);
        assert!((q * 9900.0 - 900.0).abs() < 1e-9);
        assert_eq!(rebalance_keep_probability(5, 0, 0.1), 1.0);
        assert_eq!(rebalance_keep_probability(50, 50, 0.1), 1.0);
    }

    #[test]
    fn keep_probability_matches_monte_carlo() {
        let spec = ApplianceSpec::dishwasher();
        let pairs: Vec<_> = (0..10_000)
            .map(|i| pair(i, if i % 100 == 0 { 1200.0 } else { 0.0 }, &spec))
            .collect();
        let mut kept_off = 0usize;
        let trials = 40;
        for seed in 0..trials {
            let out = rebalance_on_state(pairs.clone(), 0.1, &spec, seed).unwrap();
            kept_off += out.len() - 100;
        }
        let mean = kept_off as f64 / trials as f64;
        // sd of the mean ≈ sqrt(900 · 0.909 / 40) ≈ 4.5
        assert!((mean - 900.0).abs() < 25.0, "mean kept off {mean}");
    }

    #[test]
    fn all_on_is_identity_and_no_on_is_error() {
        let spec = ApplianceSpec::fridge();
        let pairs: Vec<_> = (0..20).map(|i| pair(i, 160.0, &spec)).collect();
        assert_eq!(rebalance_on_state(pairs.clone(), 0.1, &spec, 1).unwrap(), pairs);

        let off: Vec<_> = (0..20).map(|i| pair(i, 0.0, &spec)).collect();
        assert!(matches!(
            rebalance_on_state(off, 0.1, &spec, 1),
            Err(Error::Rebalance(_))
        ));
        assert!(rebalance_on_state(pairs, 1.0, &spec, 1).is_err());
    }

    #[test]
    fn missing_targets_are_rejected() {
        let spec = ApplianceSpec::fridge();
        let p = WindowPair {
            x: Tensor::zeros(&[4]),
            y: None,
            pos: 3,
        };
        assert!(matches!(
            rebalance_on_state(vec![p], 0.1, &spec, 0),
            Err(Error::MissingTarget(3))
        ));
    }
}
