use std::path::Path;

use mdht_core::composite::{composite_rectangle, composite_search_positive, composite_sweep, CompositeTables};
use mdht_core::coupling::{
    brute_force_min, iproject_entropy_constrained, iproject_overlapping, iproject_two_marginals, CouplingProblem,
    SolverReport, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use mdht_core::finite::{
    exact_zero_rate_errors, exponent_fit_log, mc_positive_rate_scheme, mc_zero_rate_errors, type_one_threshold,
};
use mdht_core::frontier::sig12;
use mdht_core::positive_rate::{search_region, theta_vector};
use mdht_core::prob::{entropy_raw, Axis};
use mdht_core::zero_rate::{
    build_partition, default_delta, linspace_step, rectangle_region, refine_tilts, sweep_with_tables, theta_of,
    tilt_grid, ZeroRateTables,
};
use mdht_core::{
    CompositeSpec, ConditionalPmf, Error, ErrorEstimates, HypothesisModel, JointPmf2, JointPmf3, Pmf,
    RegionFrontier, SchemeConfig, SchemeMode, UChannelTuple,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::args::{parse_rows, Command, Method, RunArgs};
use crate::{write_json, CliError, CliResult, Report};

pub fn run(args: &RunArgs, model: Option<&HypothesisModel>) -> CliResult<Report> {
    let need = || model.ok_or_else(|| CliError::Usage("--model is required for this command".into()));
    match args.command.expect("checked in prepare") {
        Command::RegionZero => region_zero(args, need()?),
        Command::RegionPositive => region_positive(args, need()?),
        Command::RegionComposite => region_composite(args, need()?),
        Command::Simulate => simulate(args, need()?),
        Command::VerifyOracle => verify_oracle(args),
    }
}

fn tilts(args: &RunArgs, model: &HypothesisModel) -> CliResult<Vec<Vec<f64>>> {
    let values = linspace_step(args.r_min, args.r_max, args.r_step)?;
    Ok(tilt_grid(&values, model.detectors() - 1)?)
}

/// Writes `region.csv`, `region.json` and, for two detectors, `region_plot.csv`.
fn emit_region(out: &Path, frontier: &RegionFrontier, mut summary: Value) -> CliResult<Report> {
    frontier.write_csv(out.join("region.csv"))?;
    frontier.write_json(out.join("region.json"))?;
    let mut outputs = vec!["region.csv".to_string(), "region.json".to_string()];
    let k = frontier.points.first().map_or(0, |p| p.theta.len());
    if k == 2 {
        frontier.write_plot_csv(out.join("region_plot.csv"))?;
        outputs.push("region_plot.csv".into());
        if let Some(nc) = frontier.nonconvexity() {
            summary["nonconvexity_margin"] = json!(nc.margin);
        }
    }
    summary["pareto_points"] = json!(frontier.len());
    summary["max_theta"] = json!((0..k).map(|i| sig12(frontier.max_coordinate(i))).collect::<Vec<_>>());
    let unconverged = frontier.metadata.get("unconverged_solves").and_then(Value::as_u64).unwrap_or(0);
    Ok(Report {
        outputs,
        summary,
        unconverged: (unconverged > 0).then(|| format!("{unconverged} projections did not converge; results written")),
    })
}

fn region_zero(args: &RunArgs, model: &HypothesisModel) -> CliResult<Report> {
    model.check_zero_rate()?;
    let l = model.groups().len();
    if args.w > l {
        let corner = rectangle_region(model, args.w)?;
        let frontier = RegionFrontier::from_points(vec![corner]).with_meta("w", args.w).with_meta("l", l);
        return emit_region(&args.out, &frontier, json!({ "command": "region-zero", "regime": "rectangle" }));
    }
    let delta = args.delta.unwrap_or_else(|| default_delta(model.x_size()));
    let tables = ZeroRateTables::build(model, delta)?;
    let tilts = if args.r_refine > 0 {
        let base = linspace_step(args.r_min, args.r_max, args.r_step)?;
        let fine = refine_tilts(model, &tables, args.w, &base, args.r_refine)?;
        tilt_grid(&fine, 1)?
    } else {
        tilts(args, model)?
    };
    let frontier = sweep_with_tables(model, &tables, args.w, &tilts)?.with_meta("r_refine", args.r_refine);
    emit_region(&args.out, &frontier, json!({ "command": "region-zero", "regime": "partition", "delta": delta }))
}

fn require_rate(args: &RunArgs) -> CliResult<f64> {
    args.rate.ok_or_else(|| CliError::Usage("--R is required for this command".into()))
}

fn region_positive(args: &RunArgs, model: &HypothesisModel) -> CliResult<Report> {
    let rate = require_rate(args)?;
    let delta = args.delta.unwrap_or(0.1);
    let frontier = search_region(model, rate, args.u_size, delta)?;
    emit_region(&args.out, &frontier, json!({ "command": "region-positive", "rate": rate, "delta": delta }))
}

fn region_composite(args: &RunArgs, model: &HypothesisModel) -> CliResult<Report> {
    let sets = args
        .sets
        .as_deref()
        .ok_or_else(|| CliError::Usage("--sets is required, e.g. \"1,3;2\"".into()))?;
    let spec = CompositeSpec::from_one_based(model, &parse_rows(sets, "--sets").map_err(CliError::Usage)?)?;
    let summary = json!({ "command": "region-composite", "sets": &spec });
    if let Some(rate) = args.rate {
        let delta = args.delta.unwrap_or(0.1);
        let frontier = composite_search_positive(model, &spec, rate, args.u_size, delta)?;
        return emit_region(&args.out, &frontier, summary);
    }
    let l = model.groups().len();
    if args.w > l {
        let corner = composite_rectangle(model, &spec, args.w)?;
        return emit_region(&args.out, &RegionFrontier::from_points(vec![corner]), summary);
    }
    let delta = args.delta.unwrap_or_else(|| default_delta(model.x_size()));
    let tables = CompositeTables::build(model, &spec, delta)?;
    let weights: Vec<Vec<f64>> = match &args.weights {
        Some(w) => parse_rows(w, "--weights").map_err(CliError::Usage)?,
        None => Vec::new(),
    };
    let frontier = composite_sweep(&tables, args.w, &tilts(args, model)?, &weights)?;
    emit_region(&args.out, &frontier, summary)
}

fn parse_channel(text: &str) -> CliResult<ConditionalPmf> {
    let rows = parse_rows::<f64>(text, "--channel").map_err(CliError::Usage)?;
    let rows = rows.into_iter().map(Pmf::new).collect::<Result<Vec<_>, _>>()?;
    Ok(ConditionalPmf::new(rows)?)
}

fn simulate(args: &RunArgs, model: &HypothesisModel) -> CliResult<Report> {
    if args.n.is_empty() {
        return Err(CliError::Usage("--n needs at least one blocklength, e.g. 60,120,180".into()));
    }
    let (mode, reference) = match args.rate {
        Some(rate) => {
            let text = args
                .channel
                .as_deref()
                .ok_or_else(|| CliError::Usage("positive-rate simulation needs --channel".into()))?;
            let tuple = UChannelTuple::shared(model, parse_channel(text)?)?;
            let theta = theta_vector(model, &tuple, rate)?.theta;
            (SchemeMode::PositiveRate { tuple, rate }, theta)
        }
        None if !args.b.is_empty() => {
            let b: Vec<usize> = args
                .b
                .iter()
                .map(|c| c.checked_sub(1).ok_or_else(|| CliError::Usage("--b cells are 1-based".into())))
                .collect::<CliResult<_>>()?;
            let r = if args.r.is_empty() { vec![0.0; model.detectors() - 1] } else { args.r.clone() };
            let delta = args.delta.unwrap_or_else(|| default_delta(model.x_size()));
            let tables = ZeroRateTables::build(model, delta)?;
            let theta = theta_of(model, &tables, &build_partition(model, &tables, args.w, &b, &r)?).theta;
            (SchemeMode::Partition { w: args.w, b, r }, theta)
        }
        None => {
            let l = model.groups().len();
            (SchemeMode::WGtL, rectangle_region(model, l + 1)?.theta)
        }
    };
    let positive = matches!(mode, SchemeMode::PositiveRate { .. });
    if positive && args.method == Method::Exact {
        return Err(CliError::Usage("exact enumeration covers zero-rate schemes only".into()));
    }
    let mut config = SchemeConfig::new(mode, args.n[0], args.mu).with_trials(args.trials, args.seed);
    config.fixed_codebook = args.fixed_codebook;
    let mut runs: Vec<ErrorEstimates> = Vec::new();
    for &n in &args.n {
        let cfg = config.with_n(n);
        let est = if positive {
            mc_positive_rate_scheme(model, &cfg)?
        } else {
            match args.method {
                Method::Mc => mc_zero_rate_errors(model, &cfg)?,
                Method::Exact => exact_zero_rate_errors(model, &cfg)?,
                Method::Auto => match exact_zero_rate_errors(model, &cfg) {
                    Err(Error::GuardExceeded(why)) => {
                        log::warn!("n={n}: exact enumeration refused ({why}); using Monte Carlo");
                        mc_zero_rate_errors(model, &cfg)?
                    }
                    other => other?,
                },
            }
        };
        runs.push(est);
    }

    let mut w = csv::Writer::from_path(args.out.join("errors.csv"))?;
    w.write_record(["n", "k", "m", "kind", "value", "ln_value", "half_width", "exact", "units"])?;
    for est in &runs {
        for (n, k, m, kind, value, exact, hw) in est.rows() {
            let ln = if kind == "beta" { est.log_beta[k - 1] } else { value.ln() };
            w.write_record([
                n.to_string(),
                k.to_string(),
                m.to_string(),
                kind.to_string(),
                sig12(value),
                sig12(ln),
                sig12(hw),
                exact.to_string(),
                "probability".to_string(),
            ])?;
        }
    }
    w.flush()?;
    write_json(&args.out.join("errors.json"), &runs)?;
    let mut outputs = vec!["errors.csv".to_string(), "errors.json".to_string()];

    let mut slopes = Vec::new();
    if runs.len() >= 3 {
        let mut w = csv::Writer::from_path(args.out.join("slopes.csv"))?;
        w.write_record(["k", "slope", "intercept", "theta", "relative_gap", "used_n", "dropped_n", "units"])?;
        for k in 0..model.detectors() {
            let series: Vec<(u64, f64)> = runs.iter().map(|e| (e.n, e.log_beta[k])).collect();
            match exponent_fit_log(&series) {
                Ok(fit) => {
                    let gap = (fit.slope - reference[k]) / reference[k];
                    w.write_record([
                        (k + 1).to_string(),
                        sig12(fit.slope),
                        sig12(fit.intercept),
                        sig12(reference[k]),
                        sig12(gap),
                        join(&fit.used),
                        join(&fit.dropped),
                        "nats".to_string(),
                    ])?;
                    slopes.push(json!({ "k": k + 1, "slope": fit.slope, "theta": reference[k], "relative_gap": gap }));
                }
                Err(e) => {
                    log::warn!("detector {}: {e}", k + 1);
                    slopes.push(json!({ "k": k + 1, "error": e.to_string() }));
                }
            }
        }
        w.flush()?;
        outputs.push("slopes.csv".into());
    }
    let threshold = type_one_threshold(&runs, model.epsilon());
    let summary = json!({
        "command": "simulate",
        "mode": match &config.mode {
            SchemeMode::WGtL => json!({ "mode": "w_gt_l" }),
            SchemeMode::Partition { w, b, r } => {
                json!({ "mode": "partition", "w": w, "b": b.iter().map(|c| c + 1).collect::<Vec<_>>(), "r": r })
            }
            SchemeMode::PositiveRate { tuple, rate } => json!({ "mode": "positive_rate", "rate": rate, "channels": tuple }),
        },
        "n": &args.n,
        "exact": runs.iter().map(|e| e.exact).collect::<Vec<_>>(),
        "max_alpha": runs.iter().map(|e| (0..model.detectors()).map(|k| e.max_alpha(k)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "beta": runs.iter().map(|e| (0..model.detectors()).map(|k| e.beta_label(k)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "type_one_threshold_n": threshold,
        "theta": reference,
        "slopes": slopes,
    });
    Ok(Report {
        outputs,
        summary,
        unconverged: None,
    })
}

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

struct Check {
    family: &'static str,
    solver: SolverReport,
    oracle: f64,
    tolerance: f64,
}

impl Check {
    /// The oracle is a feasible lattice point, so it bounds the minimum from above.
    fn pass(&self) -> bool {
        self.solver.value <= self.oracle + 1e-9 && self.oracle - self.solver.value <= self.tolerance
    }
}

fn verify_oracle(args: &RunArgs) -> CliResult<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut checks = Vec::new();
    for (family, size) in [("two_marginal_2x2", 2), ("two_marginal_3x3", 3)] {
        for _ in 0..args.instances {
            let q = JointPmf2::new(size, size, random_vec(&mut rng, size * size))?;
            let px = Pmf::new(random_vec(&mut rng, size))?;
            let py = Pmf::new(random_vec(&mut rng, size))?;
            checks.push(Check {
                family,
                solver: iproject_two_marginals(&q, &px, &py, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
                oracle: brute_force_min(&CouplingProblem::two_marginals(&q, &px, &py), 1e-3)?,
                tolerance: 1e-3,
            });
        }
    }
    let mut done = 0;
    while done < args.instances {
        let pref = JointPmf3::new(2, 2, 2, random_vec(&mut rng, 8))?;
        let tgt = JointPmf3::new(2, 2, 2, random_vec(&mut rng, 8))?;
        let (ux, uy, y) = (tgt.marginal_ux(), tgt.marginal_uy(), tgt.marginal(Axis::Y));
        let h = tgt.conditional_entropy_u_given_y();
        // skip bounds within 0.05 of H(U): their feasible sets are thinner than the lattice
        if entropy_raw(&ux.row_sums()) - h < 0.05 {
            continue;
        }
        done += 1;
        checks.push(Check {
            family: "overlapping_2x2x2",
            solver: iproject_overlapping(&pref, &ux, &uy, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
            oracle: brute_force_min(&CouplingProblem::overlapping(&pref, &ux, &uy), 0.02)?,
            tolerance: 2e-2,
        });
        checks.push(Check {
            family: "entropy_2x2x2",
            solver: iproject_entropy_constrained(&pref, &ux, &y, h, DEFAULT_TOL)?,
            oracle: brute_force_min(&CouplingProblem::entropy_constrained(&pref, &ux, &y, h), 0.02)?,
            tolerance: 2e-2,
        });
    }

    let mut w = csv::Writer::from_path(args.out.join("oracle.csv"))?;
    w.write_record(["family", "solver", "oracle", "gap", "tolerance", "converged", "pass", "units"])?;
    for c in &checks {
        w.write_record([
            c.family.to_string(),
            sig12(c.solver.value),
            sig12(c.oracle),
            sig12(c.oracle - c.solver.value),
            sig12(c.tolerance),
            c.solver.converged.to_string(),
            c.pass().to_string(),
            "nats".to_string(),
        ])?;
    }
    w.flush()?;
    let failed = checks.iter().filter(|c| !c.pass()).count();
    if failed > 0 {
        return Err(CliError::CheckFailed(format!(
            "{failed} of {} sandwich checks failed; see oracle.csv",
            checks.len()
        )));
    }
    Ok(Report {
        outputs: vec!["oracle.csv".into()],
        summary: json!({ "command": "verify-oracle", "checks": checks.len(), "failed": 0 }),
        unconverged: None,
    })
}
