use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use vidpower::calibrate::{self, MeasuredRun};
use vidpower::model::validate_config;
use vidpower::power::{streaming_report, window_energy_breakdown, EnergyReport};
use vidpower::report::{csv_header, csv_row, report_to_json, reports_to_csv, RunManifest};
use vidpower::scenarios::{single_plane_burst, single_plane_timelines};
use vidpower::timeline::export::{timeline_csv, timeline_svg};
use vidpower::timeline::oracle::oracle_simulate_with;
use vidpower::timeline::{build_timelines, residencies, WindowTimeline};
use vidpower::{presets, tuning, CalibrationSet, PackageCState, Scheme, WorkloadSpec};

use crate::config::{self, Resolved};
use crate::{CalibrateArgs, CliError, CommonArgs, CompareArgs, Format, SweepArgs, ValidateArgs};

const SVG_ROWS: usize = 12;

fn out_dir(common: &CommonArgs) -> Result<PathBuf, CliError> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    let p = dir.join(name);
    fs::write(&p, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))?;
    println!("wrote {}", p.display());
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

fn manifest(cmd: &str, common: &CommonArgs, dir: &Path, cal: &CalibrationSet, r: Option<&Resolved>) -> RunManifest {
    let mut m = RunManifest::new(cmd, &cal.name);
    m.out_dir = dir.display().to_string();
    m.seed = common.seed;
    if let Some(r) = r {
        m.config_paths = r.config_paths.clone();
        m.preset = r.preset.clone();
    }
    m
}

fn precheck(w: &WorkloadSpec, cal: &CalibrationSet) -> Result<(), CliError> {
    let v = validate_config(w, &cal.system);
    if v.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violations(v))
    }
}

pub fn simulate(common: &CommonArgs, trace: Option<&Path>) -> Result<(), CliError> {
    let mut r = config::resolve(common.preset.as_deref(), common.config.as_deref(), common.calibration.as_deref(), common.windows)?;
    if let Some(t) = trace {
        r.trace = Some(vidpower::scenarios::load_trace(t).map_err(|e| CliError::Usage(format!("{}: {e}", t.display())))?);
        r.config_paths.push(t.display().to_string());
    }
    precheck(&r.workload, &r.calibration)?;
    let dir = out_dir(common)?;
    let (sys, cal) = (&r.calibration.system, &r.calibration);
    let (mut report, windows) = match &r.trace {
        Some(t) => (single_plane_burst(&r.workload, t, sys, cal)?, single_plane_timelines(&r.workload, t, sys, cal)?),
        None => (streaming_report(&r.workload, sys, cal)?, build_timelines(&r.workload, sys, cal)?),
    };
    report.manifest = Some(manifest("simulate", common, &dir, cal, Some(&r)));

    if common.format.json() {
        write(&dir, "report.json", &report_to_json(&report))?;
    }
    if common.format.csv() {
        write(&dir, "report.csv", &reports_to_csv(&[(r.label.clone(), report.clone())])?)?;
    }
    write(&dir, "timeline.csv", &timeline_csv(&windows)?)?;
    let title = format!("{} {} {}/{} FPS", r.label, report.scheme, report.resolution, report.video_fps);
    write(&dir, "timeline.svg", &timeline_svg(&windows, &title, SVG_ROWS))?;
    println!(
        "{}: {:.2} mW average, {:.4} J/s{}",
        r.label,
        report.average_power_mw,
        report.energy_per_second_j.total,
        report
            .reference
            .as_ref()
            .map(|x| format!(", {:.2}% below {}", x.reduction_pct, x.scheme))
            .unwrap_or_default()
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    point: usize,
    status: String,
    fbc_ratio: f64,
    batch_frames: u32,
    windowed: bool,
    dirty_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<EnergyReport>,
}

fn point_label(w: &WorkloadSpec) -> String {
    format!("{}{}-{}", w.display.resolution, w.video_fps, w.scheme).to_ascii_lowercase()
}

pub fn sweep(common: &CommonArgs, args: &SweepArgs) -> Result<(), CliError> {
    let sc = match (&common.config, &args.grid) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --config or --grid, not both".into())),
        (Some(p), None) => config::load_sweep(p)?,
        (None, g) => config::sweep_preset(g.as_deref().unwrap_or("schemes"))?,
    };
    if common.preset.is_some() {
        return Err(CliError::Usage("sweep takes --grid <name> or --config <sweep.json>, not --preset".into()));
    }
    let cal = match (&common.calibration, &sc.calibration) {
        (Some(p), _) | (None, Some(p)) => config::load_calibration(p)?,
        _ => presets::default_calibration(),
    };
    let mut points = sc.points();
    if points.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    if let Some(n) = common.windows {
        points.iter_mut().for_each(|w| w.windows_to_simulate = Some(n));
    }
    let dir = out_dir(common)?;

    // Points run in parallel; collecting keeps grid order, so output is order-independent.
    let results: Vec<(WorkloadSpec, Result<EnergyReport, String>)> = points
        .into_par_iter()
        .map(|w| {
            let v = validate_config(&w, &cal.system);
            let r = if v.is_empty() {
                streaming_report(&w, &cal.system, &cal).map_err(|e| e.to_string())
            } else {
                Err(v.iter().map(|x| x.code.clone()).collect::<Vec<_>>().join("|"))
            };
            (w, r)
        })
        .collect();

    let mut m = manifest("sweep", common, &dir, &cal, None);
    m.config_paths = common.config.iter().map(|p| p.display().to_string()).collect();
    m.preset = args.grid.clone().or_else(|| common.config.is_none().then(|| "schemes".to_string()));

    let mut rows = Vec::new();
    let mut csv: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["point".to_string(), "status".into(), "fbc_ratio".into(), "batch_frames".into(), "windowed".into(), "dirty_fraction".into()];
    header.extend(csv_header());
    csv.push(header);
    let mut skipped = 0;
    for (i, (w, r)) in results.into_iter().enumerate() {
        let label = point_label(&w);
        let ov = &w.overlay;
        let mut line = vec![i.to_string(), String::new(), format!("{}", ov.fbc_ratio), ov.batch_frames.to_string(), ov.windowed.to_string(), format!("{}", ov.dirty_fraction)];
        let (status, report) = match r {
            Ok(mut rep) => {
                line.extend(csv_row(&label, &rep));
                rep.manifest = None;
                ("ok".to_string(), Some(rep))
            }
            Err(reason) => {
                skipped += 1;
                line.push(label);
                line.extend(std::iter::repeat_n(String::new(), csv_header().len() - 1));
                (format!("skipped: {reason}"), None)
            }
        };
        line[1] = status.clone();
        csv.push(line);
        rows.push(SweepRow {
            point: i,
            status,
            fbc_ratio: ov.fbc_ratio,
            batch_frames: ov.batch_frames,
            windowed: ov.windowed,
            dirty_fraction: ov.dirty_fraction,
            report,
        });
    }
    if common.format.csv() {
        write(&dir, "sweep.csv", &render_csv(csv)?)?;
    }
    if common.format.json() {
        #[derive(Serialize)]
        struct Out<'a> {
            manifest: &'a RunManifest,
            rows: &'a [SweepRow],
        }
        write(&dir, "sweep.json", &to_json(&Out { manifest: &m, rows: &rows }))?;
    }
    println!("{} points, {} skipped", rows.len(), skipped);
    Ok(())
}

fn render_csv(rows: Vec<Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Serialize)]
struct Delta {
    metric: String,
    a: f64,
    b: f64,
    delta: f64,
    /// Relative change from `a` to `b`; absent when `a` is zero.
    delta_pct: Option<f64>,
}

fn delta(metric: impl Into<String>, a: f64, b: f64) -> Delta {
    Delta { metric: metric.into(), a, b, delta: b - a, delta_pct: (a != 0.0).then(|| (b - a) / a * 100.0) }
}

pub fn compare(common: &CommonArgs, args: &CompareArgs) -> Result<(), CliError> {
    if common.preset.is_some() || common.config.is_some() {
        return Err(CliError::Usage("compare takes its two configs as positional arguments".into()));
    }
    let ra = config::resolve_either(&args.a, common.calibration.as_deref(), common.windows)?;
    let rb = config::resolve_either(&args.b, common.calibration.as_deref(), common.windows)?;
    precheck(&ra.workload, &ra.calibration)?;
    precheck(&rb.workload, &rb.calibration)?;
    let dir = out_dir(common)?;
    let run = |r: &Resolved| -> Result<EnergyReport, CliError> {
        let (sys, cal) = (&r.calibration.system, &r.calibration);
        Ok(match &r.trace {
            Some(t) => single_plane_burst(&r.workload, t, sys, cal)?,
            None => streaming_report(&r.workload, sys, cal)?,
        })
    };
    let (a, b) = (run(&ra)?, run(&rb)?);

    let mut warnings = Vec::new();
    if ra.workload.display != rb.workload.display {
        warnings.push(format!(
            "display configs differ: {} at {} Hz vs {} at {} Hz",
            ra.workload.display.resolution, ra.workload.display.refresh_hz, rb.workload.display.resolution, rb.workload.display.refresh_hz
        ));
    }
    if ra.calibration.name != rb.calibration.name {
        warnings.push(format!("calibrations differ: {} vs {}", ra.calibration.name, rb.calibration.name));
    }

    let (ea, eb) = (&a.energy_per_second_j, &b.energy_per_second_j);
    let mut deltas = vec![
        delta("energy_per_second_j", ea.total, eb.total),
        delta("dram_j_per_s", ea.dram, eb.dram),
        delta("display_j_per_s", ea.display, eb.display),
        delta("others_j_per_s", ea.others, eb.others),
        delta("average_power_mw", a.average_power_mw, b.average_power_mw),
        delta("dram_read_bytes", a.dram_read_bytes as f64, b.dram_read_bytes as f64),
        delta("dram_write_bytes", a.dram_write_bytes as f64, b.dram_write_bytes as f64),
        delta("edp_bytes", a.edp_bytes as f64, b.edp_bytes as f64),
        delta("transition_fraction", a.transition_fraction, b.transition_fraction),
    ];
    for s in PackageCState::ALL {
        let (x, y) = (a.residencies.get(&s).copied().unwrap_or(0.0), b.residencies.get(&s).copied().unwrap_or(0.0));
        if x != 0.0 || y != 0.0 {
            deltas.push(delta(format!("residency_{}", s.name()), x, y));
        }
    }

    let mut m = manifest("compare", common, &dir, &ra.calibration, None);
    m.config_paths = ra.config_paths.iter().chain(&rb.config_paths).cloned().collect();
    let presets: Vec<String> = [&ra.preset, &rb.preset].into_iter().flatten().cloned().collect();
    m.preset = (!presets.is_empty()).then(|| presets.join(","));

    if common.format.json() {
        #[derive(Serialize)]
        struct Out<'a> {
            manifest: &'a RunManifest,
            a_label: &'a str,
            b_label: &'a str,
            a: &'a EnergyReport,
            b: &'a EnergyReport,
            deltas: &'a [Delta],
            warnings: &'a [String],
        }
        write(
            &dir,
            "compare.json",
            &to_json(&Out { manifest: &m, a_label: &ra.label, b_label: &rb.label, a: &a, b: &b, deltas: &deltas, warnings: &warnings }),
        )?;
    }
    if common.format.csv() {
        let mut rows = vec![vec!["metric".to_string(), "a".into(), "b".into(), "delta".into(), "delta_pct".into()]];
        for d in &deltas {
            rows.push(vec![
                d.metric.clone(),
                format!("{}", d.a),
                format!("{}", d.b),
                format!("{}", d.delta),
                d.delta_pct.map(|x| format!("{x:.6}")).unwrap_or_default(),
            ]);
        }
        write(&dir, "compare.csv", &render_csv(rows)?)?;
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} -> {}: energy {:+.2}%",
        ra.label,
        rb.label,
        deltas[0].delta_pct.unwrap_or(0.0)
    );
    Ok(())
}

fn parse_states(list: &str) -> Result<Vec<PackageCState>, CliError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| PackageCState::parse(s).map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

fn states_in(runs: &[MeasuredRun]) -> Vec<PackageCState> {
    PackageCState::ALL
        .into_iter()
        .filter(|s| runs.iter().any(|r| r.residency(*s) > 0.0))
        .collect()
}

pub fn calibrate(common: &CommonArgs, args: &CalibrateArgs) -> Result<(), CliError> {
    let dir = out_dir(common)?;
    let template = match &common.calibration {
        Some(p) => config::load_calibration(p)?,
        None => presets::default_calibration(),
    };

    if args.fit_default {
        let seed = presets::seed_calibration();
        let (cal, report) = tuning::fit_default(&seed, args.rounds)?;
        let mut m = manifest("calibrate", common, &dir, &cal, None);
        m.preset = Some("fit-default".into());
        write(&dir, "calibration.json", &cal.to_json())?;
        #[derive(Serialize)]
        struct Out<'a> {
            manifest: &'a RunManifest,
            #[serde(flatten)]
            report: &'a tuning::TuningReport,
        }
        write(&dir, "residuals.json", &to_json(&Out { manifest: &m, report: &report }))?;
        for t in &report.targets {
            println!("{}: {:.2}% (target {:.1}%, residual {:+.2} pp)", t.name, t.achieved_pct, t.target_pct, t.residual_pp);
        }
        return Ok(());
    }

    let scheme = Scheme::parse(&args.profile).map_err(|e| CliError::Usage(e.to_string()))?;
    let base_profile = template.profile(scheme)?.clone();
    let runs = match (&args.runs, args.synthetic) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --runs or --synthetic, not both".into())),
        (None, None) => return Err(CliError::Usage("one of --runs, --synthetic or --fit-default is required".into())),
        (Some(p), None) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            calibrate::parse_runs_csv(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        (None, Some(n)) => {
            let states = match &args.states {
                Some(s) => parse_states(s)?,
                None => vec![PackageCState::C0, PackageCState::C2, PackageCState::C7, PackageCState::C8, PackageCState::C9],
            };
            let runs = calibrate::synthetic_runs(&base_profile, &states, n, args.noise, common.seed)?;
            write(&dir, "runs.csv", &calibrate::runs_to_csv(&runs, &states)?)?;
            runs
        }
    };
    let states = match &args.states {
        Some(s) => parse_states(s)?,
        None => states_in(&runs),
    };
    let fit = calibrate::fit_state_powers(&runs, &states)?;
    let profile = fit.to_profile(Some(&base_profile));
    let accuracy = calibrate::model_accuracy(&profile, &runs)?;

    let mut cal = template.clone();
    *cal.profile_mut(scheme)? = profile;
    cal.name = format!("{}-fitted", template.name);
    cal.description = format!("state powers of the {} profile fitted from {} measured runs", args.profile, runs.len());
    cal.validate()?;
    write(&dir, "calibration.json", &cal.to_json())?;

    let mut m = manifest("calibrate", common, &dir, &cal, None);
    m.config_paths = args.runs.iter().map(|p| p.display().to_string()).collect();
    #[derive(Serialize)]
    struct Out<'a> {
        manifest: &'a RunManifest,
        states: Vec<&'static str>,
        fit: &'a calibrate::StateFit,
        accuracy: &'a calibrate::Accuracy,
        note: &'a str,
    }
    let note = if args.synthetic.is_some() { "runs are synthetic" } else { "runs read from file" };
    write(
        &dir,
        "residuals.json",
        &to_json(&Out { manifest: &m, states: states.iter().map(|s| s.name()).collect(), fit: &fit, accuracy: &accuracy, note }),
    )?;
    for s in &states {
        println!("{}: {:.2} mW", s.name(), fit.powers[s]);
    }
    println!("rms residual {:.4} mW, accuracy {:.2}%", fit.rms_residual_mw, accuracy.overall_pct);
    Ok(())
}

#[derive(Debug, Serialize)]
struct Deviation {
    label: String,
    windows: usize,
    max_energy_dev_pct: f64,
    max_residency_dev_pp: f64,
    pass: bool,
}

fn window_energies(ws: &[WindowTimeline], w: &WorkloadSpec, cal: &CalibrationSet) -> Result<Vec<f64>, CliError> {
    ws.iter()
        .map(|win| Ok(window_energy_breakdown(win, cal.profile(win.scheme)?, &cal.system, &w.display)?.energy.total))
        .collect()
}

fn deviation(label: String, w: &WorkloadSpec, cal: &CalibrationSet, tick: f64, tol_pct: f64, tol_pp: f64) -> Result<Deviation, CliError> {
    let a = build_timelines(w, &cal.system, cal)?;
    let o = oracle_simulate_with(w, &cal.system, cal, tick)?;
    let (ea, eo) = (window_energies(&a, w, cal)?, window_energies(&o, w, cal)?);
    let e = ea.iter().zip(&eo).map(|(x, y)| (x - y).abs() / x.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max) * 100.0;
    let (ra, ro) = (residencies(&a), residencies(&o));
    let mut r = (ra.transition_fraction - ro.transition_fraction).abs();
    for s in PackageCState::ALL {
        r = r.max((ra.get(s) - ro.get(s)).abs());
    }
    let r = r * 100.0;
    Ok(Deviation { label, windows: a.len(), max_energy_dev_pct: e, max_residency_dev_pp: r, pass: e < tol_pct && r < tol_pp })
}

pub fn validate(common: &CommonArgs, args: &ValidateArgs) -> Result<bool, CliError> {
    let mut cases: Vec<(String, WorkloadSpec, CalibrationSet)> = Vec::new();
    let mut resolved = None;
    if common.preset.is_some() || common.config.is_some() {
        let r = config::resolve(common.preset.as_deref(), common.config.as_deref(), common.calibration.as_deref(), common.windows)?;
        precheck(&r.workload, &r.calibration)?;
        cases.push((r.label.clone(), r.workload.clone(), r.calibration.clone()));
        resolved = Some(r);
    } else {
        let cal = match &common.calibration {
            Some(p) => config::load_calibration(p)?,
            None => presets::default_calibration(),
        };
        for mut w in presets::oracle_grid() {
            let period = (w.repeat_ratio() * w.overlay.batch_frames.max(1)).max(2) as usize;
            w.windows_to_simulate = Some(common.windows.unwrap_or(period));
            let label = format!("{}{}", point_label(&w), if w.kind == vidpower::VideoKind::Vr360 { "-vr" } else { "" });
            let label = if w.overlay.fbc_ratio < 1.0 {
                format!("{label}-fbc")
            } else if w.overlay.batch_frames > 1 {
                format!("{label}-batch")
            } else {
                label
            };
            cases.push((label, w, cal.clone()));
        }
    }
    if !(args.tick > 0.0 && args.tick <= 1e-6) {
        return Err(CliError::Usage("--tick must be in (0, 1e-6] seconds".into()));
    }
    let dir = out_dir(common)?;
    let rows: Vec<Deviation> = cases
        .par_iter()
        .map(|(l, w, c)| deviation(l.clone(), w, c, args.tick, args.energy_tol_pct, args.residency_tol_pp))
        .collect::<Result<_, _>>()?;
    let max_e = rows.iter().map(|d| d.max_energy_dev_pct).fold(0.0, f64::max);
    let max_r = rows.iter().map(|d| d.max_residency_dev_pp).fold(0.0, f64::max);
    let pass = rows.iter().all(|d| d.pass);
    let cal_name = cases.first().map(|c| c.2.name.clone()).unwrap_or_default();
    let mut m = RunManifest::new("validate", &cal_name);
    m.out_dir = dir.display().to_string();
    m.seed = common.seed;
    if let Some(r) = &resolved {
        m.config_paths = r.config_paths.clone();
        m.preset = r.preset.clone();
    } else {
        m.preset = Some("oracle-grid".into());
    }

    if common.format.json() {
        #[derive(Serialize)]
        struct Out<'a> {
            manifest: &'a RunManifest,
            tick_s: f64,
            energy_tolerance_pct: f64,
            residency_tolerance_pp: f64,
            max_energy_dev_pct: f64,
            max_residency_dev_pp: f64,
            pass: bool,
            configs: &'a [Deviation],
        }
        write(
            &dir,
            "validate.json",
            &to_json(&Out {
                manifest: &m,
                tick_s: args.tick,
                energy_tolerance_pct: args.energy_tol_pct,
                residency_tolerance_pp: args.residency_tol_pp,
                max_energy_dev_pct: max_e,
                max_residency_dev_pp: max_r,
                pass,
                configs: &rows,
            }),
        )?;
    }
    if common.format.csv() {
        let mut out = vec![vec!["label".to_string(), "windows".into(), "max_energy_dev_pct".into(), "max_residency_dev_pp".into(), "pass".into()]];
        for d in &rows {
            out.push(vec![d.label.clone(), d.windows.to_string(), format!("{:.9}", d.max_energy_dev_pct), format!("{:.9}", d.max_residency_dev_pp), d.pass.to_string()]);
        }
        write(&dir, "validate.csv", &render_csv(out)?)?;
    }
    println!(
        "{} configs: max energy deviation {:.6}%, max residency deviation {:.6} pp: {}",
        rows.len(),
        max_e,
        max_r,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}
