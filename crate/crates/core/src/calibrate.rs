//! Fitting per-state powers from residency and average-power samples.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cstates::{PackageCState, PowerProfile, StatePower, TransitionSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRun {
    pub label: String,
    pub residencies: BTreeMap<PackageCState, f64>,
    pub measured_avg_power_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dram_bandwidth: Option<f64>,
}

impl MeasuredRun {
    pub fn residency(&self, s: PackageCState) -> f64 {
        self.residencies.get(&s).copied().unwrap_or(0.0)
    }

    pub fn check(&self) -> Result<()> {
        let sum: f64 = self.residencies.values().sum();
        if self.residencies.values().any(|r| !(0.0..=1.0).contains(r)) || sum > 1.0 + 1e-9 {
            return Err(Error::Input(format!("run '{}': residencies must lie in [0, 1] and sum to at most 1", self.label)));
        }
        if !(self.measured_avg_power_mw > 0.0) {
            return Err(Error::Input(format!("run '{}': measured power must be positive", self.label)));
        }
        Ok(())
    }
}

/// Reads `label,<state columns>,power_mw[,bw]`. State columns are any of
/// `C0 … C10` (`C7'` and `C7P` both accepted).
pub fn parse_runs_csv(text: &str) -> Result<Vec<MeasuredRun>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut label_col = None;
    let mut power_col = None;
    let mut bw_col = None;
    let mut states = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        match h.to_ascii_lowercase().as_str() {
            "label" => label_col = Some(i),
            "power_mw" | "measured_avg_power_mw" => power_col = Some(i),
            "bw" | "dram_bandwidth" => bw_col = Some(i),
            _ => states.push((i, PackageCState::parse(h).map_err(|_| Error::Input(format!("unknown column '{h}'")))?)),
        }
    }
    let power_col = power_col.ok_or_else(|| Error::Input("runs CSV needs a power_mw column".into()))?;
    let num = |rec: &csv::StringRecord, i: usize, row: usize| -> Result<f64> {
        rec.get(i)
            .unwrap_or("")
            .parse::<f64>()
            .map_err(|_| Error::Input(format!("row {row}, column '{}': not a number", &headers[i])))
    };
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut residencies = BTreeMap::new();
        for &(i, s) in &states {
            residencies.insert(s, num(&rec, i, row)?);
        }
        let dram_bandwidth = match bw_col {
            Some(i) if !rec.get(i).unwrap_or("").is_empty() => Some(num(&rec, i, row)?),
            _ => None,
        };
        let run = MeasuredRun {
            label: label_col.and_then(|i| rec.get(i)).map(str::to_string).unwrap_or_else(|| format!("run{row}")),
            residencies,
            measured_avg_power_mw: num(&rec, power_col, row)?,
            dram_bandwidth,
        };
        run.check()?;
        out.push(run);
    }
    Ok(out)
}

pub fn runs_to_csv(runs: &[MeasuredRun], states: &[PackageCState]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut h = vec!["label".to_string()];
    h.extend(states.iter().map(|s| s.to_string()));
    h.push("power_mw".into());
    w.write_record(&h)?;
    for r in runs {
        let mut row = vec![r.label.clone()];
        row.extend(states.iter().map(|s| format!("{}", r.residency(*s))));
        row.push(format!("{}", r.measured_avg_power_mw));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResidual {
    pub label: String,
    pub measured_mw: f64,
    pub predicted_mw: f64,
    pub residual_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFit {
    pub powers: BTreeMap<PackageCState, f64>,
    pub residuals: Vec<RunResidual>,
    pub rms_residual_mw: f64,
}

impl StateFit {
    /// Profile with the fitted powers; display and DRAM shares are taken from
    /// `template` when it has the state, and the rest goes to "others".
    pub fn to_profile(&self, template: Option<&PowerProfile>) -> PowerProfile {
        let mut p = template.cloned().unwrap_or_else(|| PowerProfile {
            states: BTreeMap::new(),
            transitions: Vec::new(),
            default_transition: TransitionSpec::ZERO,
            drfb_active_power_adder_mw: 0.0,
            panel_power_per_mpixel_mw: 0.0,
            panel_reference_pixels: 1920 * 1080,
            gpu_active_power_mw: 0.0,
            fbc_compute_power_mw: 0.0,
        });
        for (&s, &mw) in &self.powers {
            let e = p.states.entry(s).or_insert(StatePower {
                power_mw: mw,
                dram_background_mw: 0.0,
                display_mw: 0.0,
                others_mw: mw,
                dram_state: None,
            });
            let fixed = e.dram_background_mw + e.display_mw;
            if fixed > mw {
                let k = mw / fixed;
                e.dram_background_mw *= k;
                e.display_mw *= k;
            }
            e.power_mw = mw;
            e.others_mw = mw - e.dram_background_mw - e.display_mw;
        }
        p
    }
}

fn design(runs: &[MeasuredRun], states: &[PackageCState]) -> (DMatrix<f64>, DVector<f64>) {
    let a = DMatrix::from_fn(runs.len(), states.len(), |i, j| runs[i].residency(states[j]));
    let b = DVector::from_iterator(runs.len(), runs.iter().map(|r| r.measured_avg_power_mw));
    (a, b)
}

/// States that have a component along the null space of the residency matrix.
pub fn unidentifiable_states(runs: &[MeasuredRun], states: &[PackageCState]) -> Vec<PackageCState> {
    let (a, _) = design(runs, states);
    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = max.max(1e-300) * 1e-12 * states.len() as f64;
    let mut hit = vec![false; states.len()];
    for (k, ev) in eig.eigenvalues.iter().enumerate() {
        if ev.abs() <= tol {
            for j in 0..states.len() {
                if eig.eigenvectors[(j, k)].abs() > 1e-6 {
                    hit[j] = true;
                }
            }
        }
    }
    states.iter().zip(hit).filter(|(_, h)| *h).map(|(s, _)| *s).collect()
}

/// Least squares on columns `cols` only, through the SVD (minimum norm).
fn ls_subset(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(cols);
    let svd = sub.svd(true, true);
    let x = svd.solve(b, 1e-12).expect("svd computed with u and v");
    let mut full = DVector::zeros(a.ncols());
    for (k, &j) in cols.iter().enumerate() {
        full[j] = x[k];
    }
    full
}

/// Non-negative least squares (Lawson–Hanson active set).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.abs().max().max(1e-300) * b.abs().max().max(1.0);
    let tol = 1e-12 * scale * n.max(1) as f64;
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let cols: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z = ls_subset(a, b, &cols);
            if cols.iter().all(|&k| z[k] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = 1.0f64;
            for &k in &cols {
                if z[k] <= 0.0 {
                    let d = x[k] - z[k];
                    if d > 0.0 {
                        alpha = alpha.min(x[k] / d);
                    }
                }
            }
            x = &x + (z - &x) * alpha;
            for &k in &cols {
                if x[k] <= 1e-12 * scale {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    x
}

/// Fits `measured ≈ Σ P_s·R_s` with `P_s ≥ 0`. Transition time is left out
/// of the model and shows up in the residuals.
pub fn fit_state_powers(runs: &[MeasuredRun], states: &[PackageCState]) -> Result<StateFit> {
    if states.is_empty() {
        return Err(Error::Input("no states to fit".into()));
    }
    for r in runs {
        r.check()?;
    }
    if runs.len() < states.len() {
        return Err(Error::UnderDetermined(if runs.is_empty() { states.to_vec() } else { unidentifiable_states(runs, states) }));
    }
    let bad = unidentifiable_states(runs, states);
    if !bad.is_empty() {
        return Err(Error::UnderDetermined(bad));
    }
    let (a, b) = design(runs, states);
    let x = nnls(&a, &b);
    let pred = &a * &x;
    let residuals: Vec<RunResidual> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| RunResidual {
            label: r.label.clone(),
            measured_mw: r.measured_avg_power_mw,
            predicted_mw: pred[i],
            residual_mw: r.measured_avg_power_mw - pred[i],
        })
        .collect();
    let rms = (residuals.iter().map(|r| r.residual_mw.powi(2)).sum::<f64>() / runs.len() as f64).sqrt();
    Ok(StateFit {
        powers: states.iter().enumerate().map(|(j, s)| (*s, x[j])).collect(),
        residuals,
        rms_residual_mw: rms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Mean of `1 − |predicted − measured| / measured`, in percent.
    pub overall_pct: f64,
    /// Same, over runs where the state holds more than half the residency.
    pub per_state_pct: BTreeMap<PackageCState, f64>,
    pub runs: usize,
}

pub fn predicted_power(profile: &PowerProfile, run: &MeasuredRun) -> Result<f64> {
    let mut p = 0.0;
    for (s, r) in &run.residencies {
        if *r > 0.0 {
            p += profile.power_mw(*s)? * r;
        }
    }
    Ok(p)
}

pub fn model_accuracy(profile: &PowerProfile, runs: &[MeasuredRun]) -> Result<Accuracy> {
    let mut acc = Vec::with_capacity(runs.len());
    let mut per: BTreeMap<PackageCState, (f64, usize)> = BTreeMap::new();
    for r in runs {
        let p = predicted_power(profile, r)?;
        let a = 1.0 - (p - r.measured_avg_power_mw).abs() / r.measured_avg_power_mw;
        acc.push(a);
        if let Some((s, _)) = r.residencies.iter().find(|(_, v)| **v > 0.5) {
            let e = per.entry(*s).or_default();
            e.0 += a;
            e.1 += 1;
        }
    }
    let overall = if acc.is_empty() { 0.0 } else { acc.iter().sum::<f64>() / acc.len() as f64 * 100.0 };
    Ok(Accuracy {
        overall_pct: overall,
        per_state_pct: per.into_iter().map(|(s, (sum, n))| (s, sum / n as f64 * 100.0)).collect(),
        runs: runs.len(),
    })
}

/// Runs drawn from `profile`: each run is dominated (50–90%) by one state,
/// the rest spread at random, and the power is multiplied by `1 + noise·N(0,1)`.
pub fn synthetic_runs(
    profile: &PowerProfile,
    states: &[PackageCState],
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<MeasuredRun>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let dom = states[i % states.len()];
        let share = rng.random_range(0.5..0.9);
        let mut weights: Vec<f64> = states.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let k = states.iter().position(|s| *s == dom).unwrap();
        weights[k] = 0.0;
        let total: f64 = weights.iter().sum();
        let mut residencies = BTreeMap::new();
        for (j, s) in states.iter().enumerate() {
            let r = if j == k { share } else if total > 0.0 { (1.0 - share) * weights[j] / total } else { 0.0 };
            residencies.insert(*s, r);
        }
        let mut run = MeasuredRun { label: format!("synthetic-{i:04}"), residencies, measured_avg_power_mw: 0.0, dram_bandwidth: None };
        let exact = predicted_power(profile, &run)?;
        let factor = if noise > 0.0 { (1.0 + noise * normal.sample(&mut rng)).max(0.01) } else { 1.0 };
        run.measured_avg_power_mw = exact * factor;
        out.push(run);
    }
    Ok(out)
}

/// Fits on the first `train` runs and scores the rest.
pub fn holdout_accuracy(runs: &[MeasuredRun], states: &[PackageCState], train: usize) -> Result<(StateFit, Accuracy)> {
    if train >= runs.len() {
        return Err(Error::Input("hold-out split leaves no runs to score".into()));
    }
    let fit = fit_state_powers(&runs[..train], states)?;
    let profile = fit.to_profile(None);
    let acc = model_accuracy(&profile, &runs[train..])?;
    Ok((fit, acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scheme;
    use crate::presets;
    use approx::assert_relative_eq;

    const STATES: [PackageCState; 5] = [PackageCState::C0, PackageCState::C2, PackageCState::C7, PackageCState::C8, PackageCState::C9];

    fn profile() -> PowerProfile {
        presets::measured_calibration().profile(Scheme::Baseline).unwrap().clone()
    }

    #[test]
    fn noiseless_recovery_is_exact() {
        let p = profile();
        let runs = synthetic_runs(&p, &STATES, 40, 0.0, 7).unwrap();
        let fit = fit_state_powers(&runs, &STATES).unwrap();
        for s in STATES {
            assert_relative_eq!(fit.powers[&s], p.power_mw(s).unwrap(), max_relative = 1e-9);
        }
        assert!(fit.rms_residual_mw < 1e-6);
        let acc = model_accuracy(&fit.to_profile(Some(&p)), &runs).unwrap();
        assert_relative_eq!(acc.overall_pct, 100.0, epsilon = 1e-7);
    }

    #[test]
    fn noisy_holdout_accuracy() {
        let runs = synthetic_runs(&profile(), &STATES, 200, 0.02, 11).unwrap();
        let (_, acc) = holdout_accuracy(&runs, &STATES, 100).unwrap();
        assert!(acc.overall_pct >= 96.0, "{}", acc.overall_pct);
        assert_eq!(acc.per_state_pct.len(), STATES.len());
    }

    #[test]
    fn too_few_runs() {
        let runs = synthetic_runs(&profile(), &STATES, 3, 0.0, 1).unwrap();
        assert!(matches!(fit_state_powers(&runs, &STATES), Err(Error::UnderDetermined(_))));
    }

    #[test]
    fn rank_deficiency_names_the_states() {
        // C8 and C9 always appear in the same proportion.
        let mut runs = Vec::new();
        for i in 0..6 {
            let c0 = 0.1 + 0.05 * i as f64;
            let rest = 1.0 - c0;
            let r = BTreeMap::from([(PackageCState::C0, c0), (PackageCState::C8, rest * 0.5), (PackageCState::C9, rest * 0.5)]);
            runs.push(MeasuredRun { label: format!("r{i}"), residencies: r, measured_avg_power_mw: 2000.0, dram_bandwidth: None });
        }
        let states = [PackageCState::C0, PackageCState::C8, PackageCState::C9];
        match fit_state_powers(&runs, &states) {
            Err(Error::UnderDetermined(s)) => assert_eq!(s, vec![PackageCState::C8, PackageCState::C9]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nnls_clamps_negative_components() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let x = nnls(&a, &b);
        assert!(x[1] == 0.0 && x[0] > 0.0);
        assert_relative_eq!(x[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn measured_accuracy() {
        let cal = presets::measured_calibration();
        let base = MeasuredRun {
            label: "baseline".into(),
            residencies: BTreeMap::from([(PackageCState::C0, 0.09), (PackageCState::C2, 0.11), (PackageCState::C8, 0.80)]),
            measured_avg_power_mw: 2162.0,
            dram_bandwidth: None,
        };
        let acc = model_accuracy(cal.profile(Scheme::Baseline).unwrap(), &[base]).unwrap();
        assert!(acc.overall_pct >= 99.9);
    }

    #[test]
    fn csv_round_trip() {
        let runs = synthetic_runs(&profile(), &STATES, 6, 0.01, 3).unwrap();
        let text = runs_to_csv(&runs, &STATES).unwrap();
        let back = parse_runs_csv(&text).unwrap();
        assert_eq!(back, runs);
        assert!(parse_runs_csv("label,C0,power_mw\na,2,100\n").is_err());
        assert!(parse_runs_csv("label,C0,watts\na,0.5,100\n").is_err());
    }

    #[test]
    fn fitted_monotone_profile_keeps_order() {
        let runs = synthetic_runs(&profile(), &STATES, 60, 0.0, 5).unwrap();
        let fit = fit_state_powers(&runs, &STATES).unwrap();
        let v: Vec<f64> = STATES.iter().map(|s| fit.powers[s]).collect();
        assert!(v.windows(2).all(|w| w[0] > w[1]));
    }
}
