//! Subcommand bodies. Each turns resolved parameters into a results table
//! and a flat summary.

use rdl_core::audit::{self, CandidateScheme, CandidateSolution, PicardGuess};
use rdl_core::drift::DriftSpec;
use rdl_core::flow::{self, FlowDrift, HullPolicy, Stepper};
use rdl_core::functionals::{self, ConstantShift, OpenSetSpec};
use rdl_core::mc::{self, TrialPlan};
use rdl_core::nets::{self, ChainConfig, LipFunction, ZetaFit};
use rdl_core::paths::{sample_path, TimeWindow};
use rdl_core::rng::{tag, KeyedStream};
use rdl_core::stats;
use rdl_core::zvonkin::{self, PdeGrid, ZvonkinSolution};

use crate::cli::{CommandDef, Ctx, Outcome, RunError};
use crate::columnar;
use crate::config::p;
use crate::output::{Cell, Provenance, Summary, Table};

fn drift(ctx: &Ctx) -> Result<DriftSpec, RunError> {
    Ok(DriftSpec::parse(ctx.str("drift"))?)
}

fn prov(ctx: &Ctx, trial_lo: u64, trial_hi: u64, level: u32) -> Provenance {
    Provenance {
        seed: ctx.seed,
        trial_lo,
        trial_hi,
        level,
    }
}

fn log2_ceil(n: usize) -> u32 {
    n.max(1).next_power_of_two().trailing_zeros()
}

fn opt_cell(v: Option<f64>) -> Cell {
    Cell::F(v.unwrap_or(f64::NAN))
}

fn solve_pde(ctx: &Ctx, b: &DriftSpec) -> Result<ZvonkinSolution, RunError> {
    let grid = PdeGrid::for_drift(b, ctx.usize("nx")?, ctx.usize("nt")?);
    Ok(zvonkin::find_lambda(b, grid, ctx.f64("target")?)?.solution)
}

fn exp_moment(ctx: &Ctx) -> Result<Outcome, RunError> {
    let b = drift(ctx)?;
    let alpha = ctx.f64("alpha")?;
    let plan = TrialPlan::new(ctx.u64("trials")?, ctx.seed, ctx.u32("level")?);
    let functional = ctx.str("functional").to_string();
    let f = |trial: u64| -> rdl_core::Result<f64> {
        let path = plan.path(trial, b.dim, b.horizon)?;
        match functional.as_str() {
            "derivative" => functionals::derivative_integral(&b, &path),
            _ => functionals::covariation_partition(&b, &path),
        }
    };
    if !matches!(functional.as_str(), "derivative" | "covariation") {
        return Err(RunError::Precondition(format!(
            "--functional must be `covariation` or `derivative`, got `{functional}`"
        )));
    }
    let e = mc::estimate_exp_moment(&ctx.exec, f, alpha, &plan)?;
    let mut t = Table::new(&[
        "drift", "functional", "alpha", "estimate", "ci_lo", "ci_hi", "bootstrap_se", "trimmed", "trimmed_ratio",
        "max_sample", "n_used", "n_flagged", "functional_mean", "functional_var",
    ]);
    t.push(
        prov(ctx, 0, plan.n_trials, plan.level),
        vec![
            b.to_string().into(),
            functional.as_str().into(),
            alpha.into(),
            e.estimate.into(),
            e.ci.0.into(),
            e.ci.1.into(),
            e.bootstrap_se.into(),
            e.trimmed.into(),
            e.trimmed_ratio().into(),
            e.max_sample.into(),
            e.n_used.into(),
            e.n_flagged.into(),
            e.functional_mean.into(),
            e.functional_var.into(),
        ],
    );
    let mut s = Summary::default();
    s.text("drift", b.to_string());
    s.num("estimate", e.estimate);
    s.num("ci_lo", e.ci.0);
    s.num("ci_hi", e.ci.1);
    s.num("bootstrap_se", e.bootstrap_se);
    s.num("trimmed_ratio", e.trimmed_ratio());
    s.flag("finite", e.estimate.is_finite());
    s.int("n_flagged", e.n_flagged as i64);
    Ok(Outcome {
        table: t,
        summary: s,
        extra: vec![],
    })
}

fn lambda_grid(ctx: &Ctx) -> Result<Vec<f64>, RunError> {
    let (lo, hi, step) = (ctx.f64("lambda-min")?, ctx.f64("lambda-max")?, ctx.f64("lambda-step")?);
    if !(step > 0.0) || hi < lo {
        return Err(RunError::Precondition("lambda grid needs step > 0 and max >= min".into()));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

fn tail_fit(ctx: &Ctx) -> Result<Outcome, RunError> {
    let b = drift(ctx)?;
    let w = TimeWindow::new(ctx.f64("r")?, ctx.f64("u")?)?;
    let h1 = ConstantShift::zero(w, b.dim);
    let h2 = ConstantShift::new(w, vec![ctx.f64("shift")?; b.dim]);
    let lambdas = lambda_grid(ctx)?;
    let plan = TrialPlan::new(ctx.u64("trials")?, ctx.seed, ctx.u32("level")?);
    let tail = mc::tail_curve(&ctx.exec, &b, &h1, &h2, &lambdas, &plan)?;
    let mut t = Table::new(&["lambda", "prob", "ci_lo", "ci_hi", "exceedances"]);
    for i in 0..lambdas.len() {
        t.push(
            prov(ctx, 0, plan.n_trials, plan.level),
            vec![
                tail.lambdas[i].into(),
                tail.probs[i].into(),
                tail.ci_low[i].into(),
                tail.ci_high[i].into(),
                tail.exceedances[i].into(),
            ],
        );
    }
    let mut s = Summary::default();
    s.text("drift", b.to_string());
    s.num("normalizer", tail.normalizer);
    match mc::fit_concentration(&tail) {
        Ok(fit) => {
            s.num("alpha_hat", fit.alpha_hat);
            s.num("c_hat", fit.c_hat);
            s.num("r_squared", fit.r_squared);
            s.num("alpha_se", fit.alpha_se);
            s.int("bins", fit.bins as i64);
            s.flag("decaying", fit.decaying);
            s.flag("fit_supported", true);
        }
        Err(rdl_core::Error::FitUnsupported { supported, .. }) => {
            s.num("alpha_hat", f64::NAN);
            s.num("r_squared", f64::NAN);
            s.int("bins", supported as i64);
            s.flag("fit_supported", false);
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Outcome {
        table: t,
        summary: s,
        extra: vec![],
    })
}

fn covariation(ctx: &Ctx) -> Result<Outcome, RunError> {
    let b = drift(ctx)?;
    if !b.is_smooth() {
        return Err(RunError::Precondition(format!("covariation needs a smooth drift, got `{b}`")));
    }
    let plan = TrialPlan::new(ctx.u64("trials")?, ctx.seed, ctx.u32("level")?);
    let (tol_p, tol_r) = (ctx.f64("tol-partition")?, ctx.f64("tol-residual")?);
    let reports = mc::run_trials(&ctx.exec, &plan, |trial| {
        let path = plan.path(trial, b.dim, b.horizon)?;
        functionals::covariation_decomposition(&b, &path)
    })?;
    let mut t = Table::new(&[
        "derivative_integral", "partition_sum", "i1", "i2", "i3", "residual", "algebraic_gap",
    ]);
    let mut gaps = Vec::new();
    let mut residuals = Vec::new();
    let mut alg: f64 = 0.0;
    for (i, r) in reports.iter().enumerate() {
        let d = r.derivative_integral.unwrap_or(f64::NAN);
        gaps.push((r.partition_sum - d).abs());
        residuals.push(r.residual.unwrap_or(f64::NAN));
        alg = alg.max(r.algebraic_gap);
        t.push(
            prov(ctx, i as u64, i as u64 + 1, plan.level),
            vec![
                d.into(),
                r.partition_sum.into(),
                r.i1.into(),
                r.i2.into(),
                r.i3.into(),
                opt_cell(r.residual),
                r.algebraic_gap.into(),
            ],
        );
    }
    let n = reports.len() as f64;
    let mut s = Summary::default();
    s.text("drift", b.to_string());
    s.num("frac_partition_within", gaps.iter().filter(|g| **g <= tol_p).count() as f64 / n);
    s.num("frac_residual_within", residuals.iter().filter(|g| **g <= tol_r).count() as f64 / n);
    s.num("median_partition_gap", stats::median(&gaps));
    s.num("median_residual", stats::median(&residuals));
    s.num("max_algebraic_gap", alg);
    Ok(Outcome {
        table: t,
        summary: s,
        extra: vec![],
    })
}

fn zvonkin_cmd(ctx: &Ctx) -> Result<Outcome, RunError> {
    let b = drift(ctx)?;
    let grid = PdeGrid::for_drift(&b, ctx.usize("nx")?, ctx.usize("nt")?);
    let target = ctx.f64("target")?;
    let search = zvonkin::find_lambda(&b, grid, target)?;
    let sol = &search.solution;
    let level = log2_ceil(grid.nt);
    let mut t = Table::new(&["step", "lambda", "grad_sup", "accepted"]);
    for (i, (lam, g)) in search.sweep.iter().enumerate() {
        t.push(prov(ctx, 0, 0, level), vec![i.into(), (*lam).into(), (*g).into(), (*g <= target).into()]);
    }
    let bounds = sol.transformed().bounds();
    let mut s = Summary::default();
    s.text("drift", b.to_string());
    s.num("lambda", search.lambda);
    s.num("grad_sup", sol.grad_sup);
    s.flag("accepted", sol.accepted(target));
    s.num("max_abs_u", sol.max_abs_u);
    s.num("max_principle_bound", zvonkin::max_principle_bound(b.bound(), search.lambda, grid.horizon));
    s.num("solver_residual", sol.solver_residual);
    s.num("min_psi_slope", sol.min_psi_slope());
    s.num("b_tilde_max", bounds.b_max);
    s.num("sigma_min", bounds.sigma_min);
    s.num("sigma_max", bounds.sigma_max);
    if ctx.flag("self-check")? {
        s.num("self_convergence_ratio", zvonkin::self_convergence_ratio(&b, search.lambda, grid)?);
    }
    let mut extra = vec![];
    if ctx.flag("export")? {
        extra.push((
            "zvonkin.bin".to_string(),
            columnar::zvonkin_to_columnar(sol).to_bytes().map_err(|e| RunError::Io(std::io::Error::other(e)))?,
        ));
    }
    Ok(Outcome {
        table: t,
        summary: s,
        extra,
    })
}

fn flow_holder(ctx: &Ctx) -> Result<Outcome, RunError> {
    let b = drift(ctx)?;
    let scheme = ctx.str("scheme").to_string();
    let sol = match scheme.as_str() {
        "direct" => None,
        "transformed" => Some(solve_pde(ctx, &b)?),
        other => return Err(RunError::Precondition(format!("--scheme must be direct or transformed, got `{other}`"))),
    };
    let dt_level = ctx.u32("dt-level")?;
    let noise_level = ctx.u32("noise-level")?;
    let dt = b.horizon / (1u64 << dt_level) as f64;
    let radius = ctx.f64("radius")?;
    let xs = flow::uniform_x_grid(radius, ctx.usize("x-points")?);
    let times = flow::dyadic_times(ctx.u32("time-level")?, b.horizon);
    let noises = ctx.u64("noises")?;
    let tables = ctx.exec_map(noises, |i| {
        let noise = sample_path(noise_level, 1, b.horizon, ctx.seed, i)?;
        let drift = match &sol {
            Some(s) => FlowDrift::Transformed(s),
            None => FlowDrift::Direct(&b),
        };
        let table = flow::simulate_flow(drift, &noise, &times, &times, &xs, dt)?;
        let fit = flow::holder_fit(&table, radius)?;
        let comp = flow::composition_residual(&table, HullPolicy::Skip)?;
        Ok((table, fit, comp))
    })?;
    let mut t = Table::new(&[
        "noise", "alpha_hat", "c_hat", "r_squared", "alpha_se", "pairs", "composition_residual",
        "composition_evaluated", "composition_skipped", "escaped",
    ]);
    let mut alphas = Vec::new();
    let mut cs = Vec::new();
    let mut comps = Vec::new();
    for (i, (table, fit, comp)) in tables.iter().enumerate() {
        alphas.push(fit.alpha_hat);
        cs.push(fit.c_hat);
        comps.push(comp.max_residual);
        t.push(
            prov(ctx, i as u64, i as u64 + 1, dt_level),
            vec![
                i.into(),
                fit.alpha_hat.into(),
                fit.c_hat.into(),
                fit.r_squared.into(),
                fit.alpha_se.into(),
                fit.pair_count.into(),
                comp.max_residual.into(),
                comp.evaluated.into(),
                comp.skipped.into(),
                table.escaped_count().into(),
            ],
        );
    }
    let mut s = Summary::default();
    s.text("drift", b.to_string());
    s.text("scheme", scheme);
    s.num("median_alpha_hat", stats::median(&alphas));
    s.num("min_alpha_hat", alphas.iter().copied().fold(f64::INFINITY, f64::min));
    s.num("median_c_hat", stats::median(&cs));
    s.num("median_composition_residual", stats::median(&comps));
    let mut extra = vec![];
    if ctx.flag("export")? {
        if let Some((table, _, _)) = tables.first() {
            extra.push((
                "flow.bin".to_string(),
                columnar::flow_table_to_columnar(table)
                    .to_bytes()
                    .map_err(|e| RunError::Io(std::io::Error::other(e)))?,
            ));
        }
    }
    Ok(Outcome {
        table: t,
        summary: s,
        extra,
    })
}

/// Largest number of code strings written by `net-count --codes true`.
pub const CODE_EXPORT_MAX: u128 = 1_000_000;

fn net_count(ctx: &Ctx) -> Result<Outcome, RunError> {
    let l = ctx.f64("l")?;
    let n_sup = ctx.f64("N")?;
    let eps = ctx.f64("eps")?;
    let d = ctx.usize("d")?;
    let window = TimeWindow::new(0.0, l)?;
    let net = nets::build_net(window, n_sup, eps, d)?;
    let knots = net.knot_count();
    let bound =
        d as f64 * (2.0 * (2.0 * n_sup / eps).ceil() + 1.0).ln() + d as f64 * 3f64.ln() * (knots as f64 - 1.0);
    let probes = ctx.u64("probes")?;
    let pieces = ctx.usize("pieces")?;
    let dists = ctx.exec_map(probes, |i| {
        let mut stream = KeyedStream::from_words(&[tag::PROBE, ctx.seed, i]);
        let h = LipFunction::random(window, n_sup, d, pieces, &mut stream);
        let g = net.project(&h)?;
        Ok(functionals::sup_distance(&h, &g, d))
    })?;
    let max_dist = dists.iter().copied().fold(0.0, f64::max);
    let enumerated = match net.cardinality {
        Some(c) if c <= CODE_EXPORT_MAX => Some(net.enumerate()?.count() as u128),
        _ => None,
    };
    let mut t = Table::new(&[
        "l", "N", "eps", "d", "knot_count", "cardinality", "log_cardinality", "closed_form_log", "entropy_bound",
        "enumerated", "max_probe_distance",
    ]);
    let card = net.cardinality.map_or_else(|| "implicit".to_string(), |c| c.to_string());
    t.push(
        prov(ctx, 0, probes, 0),
        vec![
            l.into(),
            n_sup.into(),
            eps.into(),
            d.into(),
            knots.into(),
            card.clone().into(),
            net.log_cardinality.into(),
            net.closed_form_log().into(),
            bound.into(),
            enumerated.map_or_else(|| Cell::S(String::new()), |c| Cell::S(c.to_string())),
            max_dist.into(),
        ],
    );
    let mut s = Summary::default();
    s.int("knot_count", knots as i64);
    s.text("cardinality", card);
    s.num("log_cardinality", net.log_cardinality);
    s.num("closed_form_log", net.closed_form_log());
    s.num("entropy_bound", bound);
    s.flag("bound_holds", net.log_cardinality <= bound);
    if let (Some(e), Some(c)) = (enumerated, net.cardinality) {
        s.flag("enumeration_matches", e == c);
    }
    s.num("max_probe_distance", max_dist);
    s.flag("covering_ok", max_dist <= eps);
    let mut extra = vec![];
    if ctx.flag("codes")? {
        if enumerated.is_none() {
            return Err(RunError::Precondition(format!(
                "--codes needs a net with at most {CODE_EXPORT_MAX} elements"
            )));
        }
        let mut text = String::new();
        for (code, _) in net.enumerate()? {
            text.push_str(&net.code_string(&code));
            text.push('\n');
        }
        extra.push(("codes.txt".to_string(), text.into_bytes()));
    }
    Ok(Outcome {
        table: t,
        summary: s,
        extra,
    })
}

fn chain(ctx: &Ctx) -> Result<Outcome, RunError> {
    let b = drift(ctx)?;
    let l0 = ctx.f64("l")?;
    let count = ctx.u32("l-count")?;
    let ls: Vec<f64> = (0..count).map(|k| l0 / (1u64 << k) as f64).collect();
    let cfg = ChainConfig {
        pair_count: ctx.usize("pairs")?,
        c_threshold: ctx.f64("c")?,
        quantile: ctx.f64("quantile")?,
        cells_per_window: ctx.usize("cells")?,
    };
    let trials = ctx.u64("trials")?;
    let sweep = nets::chain_sweep(&ctx.exec, &b, &ls, ctx.f64("N")?, trials, ctx.seed, &cfg)?;
    let mut t = Table::new(&[
        "l", "element_count", "pairs_3l", "pairs_4l", "exhaustive", "modulus_sup", "modulus_sup_4l", "modulus_mean",
        "bound_c_hat", "threshold", "failures", "failure_freq", "failure_ci_lo", "failure_ci_hi",
    ]);
    let mut failures = 0;
    for r in &sweep.reports {
        failures += r.failures;
        let level = (cfg.cells_per_window as f64 * b.horizon / r.l).log2().round() as u32;
        t.push(
            prov(ctx, 0, trials, level),
            vec![
                r.l.into(),
                r.element_count.into(),
                r.pairs_3l.into(),
                r.pairs_4l.into(),
                r.exhaustive.into(),
                r.modulus_sup.into(),
                r.modulus_sup_4l.into(),
                r.modulus_mean.into(),
                r.bound_c_hat.into(),
                r.threshold.into(),
                r.failures.into(),
                r.failure_freq.into(),
                r.failure_ci.0.into(),
                r.failure_ci.1.into(),
            ],
        );
    }
    let mut s = Summary::default();
    s.text("drift", b.to_string());
    s.opt("slope", sweep.slope.map(|f| f.slope));
    s.opt("slope_ci_lo", sweep.slope.map(|f| f.slope_ci95().0));
    s.opt("slope_ci_hi", sweep.slope.map(|f| f.slope_ci95().1));
    s.opt("slope_4l", sweep.slope_4l.map(|f| f.slope));
    s.int("failures_total", failures as i64);
    match sweep.zeta {
        ZetaFit::Fitted { zeta_hat, .. } => {
            s.num("zeta_hat", zeta_hat);
            s.flag("no_observed_failures", false);
        }
        ZetaFit::NoObservedFailures { usable } => {
            s.num("zeta_hat", f64::NAN);
            s.flag("no_observed_failures", true);
            s.int("zeta_usable_levels", usable as i64);
        }
    }
    Ok(Outcome {
        table: t,
        summary: s,
        extra: vec![],
    })
}

/// `t0,t1,x0,x1` boxes separated by `;`.
fn parse_boxes(text: &str) -> Result<Vec<[f64; 4]>, RunError> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|b| {
            let v: Vec<f64> = b
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| RunError::Precondition(format!("--boxes: cannot parse `{b}`")))?;
            <[f64; 4]>::try_from(v).map_err(|_| RunError::Precondition(format!("--boxes: `{b}` needs 4 numbers")))
        })
        .collect()
}

fn occupation(ctx: &Ctx) -> Result<Outcome, RunError> {
    let boxes = parse_boxes(ctx.str("boxes"))?;
    let set = OpenSetSpec::from_intervals(&boxes);
    let horizon = 1.0;
    let h = ConstantShift::new(TimeWindow::new(0.0, horizon)?, vec![ctx.f64("shift")?]);
    let plan = TrialPlan::new(ctx.u64("trials")?, ctx.seed, ctx.u32("level")?);
    let occ = mc::run_trials(&ctx.exec, &plan, |trial| {
        let path = plan.path(trial, 1, horizon)?;
        functionals::occupation_time(&set, &path, &h)
    })?;
    let mean = stats::mean(&occ);
    let se = (stats::variance(&occ) / occ.len() as f64).sqrt();
    let mut t = Table::new(&["boxes", "set_measure", "mean", "se", "min", "max"]);
    t.push(
        prov(ctx, 0, plan.n_trials, plan.level),
        vec![
            boxes.len().into(),
            set.measure().into(),
            mean.into(),
            se.into(),
            occ.iter().copied().fold(f64::INFINITY, f64::min).into(),
            occ.iter().copied().fold(f64::NEG_INFINITY, f64::max).into(),
        ],
    );
    let mut s = Summary::default();
    s.num("mean_occupation", mean);
    s.num("se", se);
    s.num("set_measure", set.measure());
    Ok(Outcome {
        table: t,
        summary: s,
        extra: vec![],
    })
}

fn candidate_scheme(ctx: &Ctx) -> Result<CandidateScheme, RunError> {
    Ok(match ctx.str("scheme") {
        "euler" => CandidateScheme::Euler,
        "euler-midpoint" => CandidateScheme::EulerMidpoint,
        "picard" => CandidateScheme::Picard {
            iterations: ctx.u32("picard-iterations")?,
            guess: PicardGuess::Noise,
        },
        "restart-perturbed" => CandidateScheme::RestartPerturbed {
            magnitude: ctx.f64("magnitude")?,
        },
        "flow" => CandidateScheme::Flow,
        other => return Err(RunError::Precondition(format!("unknown candidate scheme `{other}`"))),
    })
}

/// Threshold on the certificate decay slope accepted by `uniqueness`.
pub fn decay_target() -> f64 {
    1.0 / 15.0 - 0.05
}

fn uniqueness(ctx: &Ctx) -> Result<Outcome, RunError> {
    let b = drift(ctx)?;
    let scheme = candidate_scheme(ctx)?;
    let oracle_kind = ctx.str("oracle").to_string();
    let sol = match oracle_kind.as_str() {
        "direct" => None,
        "transformed" => Some(solve_pde(ctx, &b)?),
        other => return Err(RunError::Precondition(format!("--oracle must be direct or transformed, got `{other}`"))),
    };
    let r = ctx.f64("r")?;
    let x0 = ctx.f64("x0")?;
    let (m_lo, m_hi) = (ctx.u32("m-min")?, ctx.u32("m-max")?);
    if m_hi < m_lo || m_hi > 30 {
        return Err(RunError::Precondition("need m-min <= m-max <= 30".into()));
    }
    let levels: Vec<u64> = (m_lo..=m_hi).map(|k| 1u64 << k).collect();
    let noise_level = ctx.u32("noise-level")?;
    let oracle_dt = b.horizon / (1u64 << ctx.u32("oracle-level")?) as f64;
    let noises = ctx.u64("noises")?;
    let certs = ctx.exec_map(noises, |i| {
        let noise = sample_path(noise_level, 1, b.horizon, ctx.seed, i)?;
        let drift = match &sol {
            Some(s) => FlowDrift::Transformed(s),
            None => FlowDrift::Direct(&b),
        };
        let st = Stepper::new(drift, &noise, oracle_dt)?;
        if scheme == CandidateScheme::Flow {
            let own = CandidateSolution::from_flow(&st, x0, &noise)?;
            let refs = vec![&own; levels.len()];
            audit::certificate(&st, &refs, x0, r, &levels)
        } else {
            audit::level_coupled_certificate(&st, &b, &noise, scheme, x0, r, &levels)
        }
    })?;
    let mut t = Table::new(&["noise", "M", "step_sup", "endpoint_abs", "f0"]);
    for (i, c) in certs.iter().enumerate() {
        for j in 0..levels.len() {
            t.push(
                prov(ctx, i as u64, i as u64 + 1, noise_level),
                vec![i.into(), levels[j].into(), c.step_sups[j].into(), c.endpoint_abs[j].into(), c.f0[j].into()],
            );
        }
    }
    let med: Vec<f64> = (0..levels.len())
        .map(|j| stats::median(&certs.iter().map(|c| c.endpoint_abs[j]).collect::<Vec<_>>()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .zip(&med)
        .filter(|(_, e)| **e > 0.0)
        .map(|(m, e)| ((*m as f64).ln(), e.ln()))
        .unzip();
    let decay = stats::line_fit(&xs, &ys).map(|f| -f.slope);
    let per_noise: Vec<f64> = certs.iter().filter_map(|c| c.decay_slope).collect();
    let max_endpoint = certs
        .iter()
        .flat_map(|c| c.endpoint_abs.iter().copied())
        .fold(0.0, f64::max);
    let target = decay_target();
    let mut s = Summary::default();
    s.text("drift", b.to_string());
    s.text("scheme", scheme.name());
    s.text("oracle", oracle_kind);
    s.opt("decay_slope", decay);
    s.num("decay_target", target);
    s.flag("decay_pass", decay.is_some_and(|d| d >= target));
    s.num("median_noise_decay_slope", if per_noise.is_empty() { f64::NAN } else { stats::median(&per_noise) });
    s.num("max_endpoint_abs", max_endpoint);
    s.flag("endpoint_within_tolerance", max_endpoint <= audit::INTERPOLATION_TOL);
    let (lhs, rhs) = audit::exponent_identity(*levels.last().unwrap_or(&1) as f64);
    s.num("exponent_identity_gap", (lhs - rhs).abs());
    let mut extra = vec![];
    if ctx.flag("export")? {
        let noise = sample_path(noise_level, 1, b.horizon, ctx.seed, 0)?;
        extra.push((
            "noise.bin".to_string(),
            columnar::path_to_columnar(&noise)
                .to_bytes()
                .map_err(|e| RunError::Io(std::io::Error::other(e)))?,
        ));
    }
    Ok(Outcome {
        table: t,
        summary: s,
        extra,
    })
}

fn continuity(ctx: &Ctx) -> Result<Outcome, RunError> {
    let b = drift(ctx)?;
    let w = TimeWindow::new(0.0, b.horizon)?;
    let n_sup = ctx.f64("N")?;
    let h = LipFunction::constant(w, &[ctx.f64("h")?], n_sup)?;
    let peak = ctx.f64("g-peak")?;
    let g = LipFunction::new(w, vec![0.0, 0.5 * b.horizon, b.horizon], vec![0.0, peak, 0.0], 1, n_sup)?;
    let scales = ctx.list("scales")?;
    let widths = ctx.list("widths")?;
    let plan = TrialPlan::new(ctx.u64("trials")?, ctx.seed, ctx.u32("level")?);
    let rep = audit::drift_integral_continuity(&ctx.exec, &b, &h, &g, &scales, &widths, &plan)?;
    let mut t = Table::new(&["kind", "scale", "width", "median_gap", "max_gap", "exceed_frac"]);
    let pv = prov(ctx, 0, plan.n_trials, plan.level);
    for (k, sc) in scales.iter().enumerate() {
        t.push(
            pv,
            vec!["raw".into(), (*sc).into(), 0.0.into(), rep.median_gap[k].into(), rep.max_gap[k].into(), f64::NAN.into()],
        );
    }
    for (i, wd) in widths.iter().enumerate() {
        for (k, sc) in scales.iter().enumerate() {
            t.push(
                pv,
                vec![
                    "mollified".into(),
                    (*sc).into(),
                    (*wd).into(),
                    rep.median_gap_mollified[i][k].into(),
                    f64::NAN.into(),
                    rep.exceed_frac[i][k].into(),
                ],
            );
        }
    }
    let mut s = Summary::default();
    s.text("drift", b.to_string());
    s.flag("trend_holds", rep.trend_holds());
    s.num("median_gap_first", rep.median_gap.first().copied().unwrap_or(f64::NAN));
    s.num("median_gap_last", rep.median_gap.last().copied().unwrap_or(f64::NAN));
    s.num(
        "max_exceed_frac",
        rep.exceed_frac.iter().flatten().copied().fold(0.0, f64::max),
    );
    Ok(Outcome {
        table: t,
        summary: s,
        extra: vec![],
    })
}

impl Ctx {
    /// Maps `0..n` through the executor, in index order.
    pub fn exec_map<T, F>(&self, n: u64, f: F) -> Result<Vec<T>, RunError>
    where
        T: Send,
        F: Fn(u64) -> rdl_core::Result<T> + Sync + Send,
    {
        let plan = TrialPlan::new(n, self.seed, 0).with_batch(n.max(1));
        Ok(mc::run_trials(&self.exec, &plan, f)?)
    }
}

pub fn definitions() -> Vec<CommandDef> {
    vec![
        CommandDef {
            name: "exp-moment",
            about: "Exponential moment of the drift derivative integral",
            exercises: "E exp(alpha |int_0^1 b'_x(t, W_t) dt|^2) < infinity for bounded b and small alpha, with the \
                        integral read as the covariation [b(., W), W]",
            params: const { &[
                p("drift", "zero", "Drift identifier"),
                p("alpha", "0.05", "Exponent alpha"),
                p("trials", "1000", "Number of paths"),
                p("level", "10", "Dyadic grid level"),
                p("functional", "covariation", "covariation (any drift) or derivative (smooth drifts)"),
            ] },
            run: exp_moment,
        },
        CommandDef {
            name: "tail-fit",
            about: "Tail curve and sub-Gaussian fit of shifted drift integrals",
            exercises: "P(|int_r^u (b(s, W_s + h1) - b(s, W_s + h2)) ds| > lambda l^(1/2) |h1 - h2|_inf) <= C \
                        exp(-alpha lambda^2), l = u - r",
            params: const { &[
                p("drift", "checkerboard", "Drift identifier"),
                p("trials", "10000", "Number of paths"),
                p("level", "12", "Dyadic grid level"),
                p("r", "0.25", "Window start"),
                p("u", "0.5", "Window end"),
                p("shift", "0.1", "Constant value of h2 (h1 = 0)"),
                p("lambda-min", "1", "Smallest lambda"),
                p("lambda-max", "6", "Largest lambda"),
                p("lambda-step", "0.25", "Lambda spacing"),
            ] },
            run: tail_fit,
        },
        CommandDef {
            name: "covariation",
            about: "Covariation estimators and the time-reversal decomposition",
            exercises: "int_0^1 b'_x(t, W_t) dt = [b(., W), W]_1 = I1 + I2 + I3 via the time-reversed motion W_(1-t)",
            params: const { &[
                p("drift", "sin", "Smooth drift identifier"),
                p("trials", "200", "Number of paths"),
                p("level", "16", "Dyadic grid level"),
                p("tol-partition", "0.02", "Tolerance on |partition sum - derivative integral|"),
                p("tol-residual", "0.05", "Tolerance on the decomposition residual"),
            ] },
            run: covariation,
        },
        CommandDef {
            name: "zvonkin",
            about: "Backward parabolic PDE and the Zvonkin change of variables",
            exercises: "dU/dt + U''/2 + b U' - lambda U = -b, U(T) = 0, with |U'| <= 1/2 for sufficiently large \
                        lambda, so psi = x + U is a diffeomorphism",
            params: const { &[
                p("drift", "checkerboard", "Drift identifier"),
                p("nx", "512", "Spatial vertices"),
                p("nt", "1024", "Time steps"),
                p("target", "0.5", "Gradient target"),
                p("self-check", "false", "Also compute the grid self-convergence ratio"),
                p("export", "false", "Write zvonkin.bin (columnar U, dU)"),
            ] },
            run: zvonkin_cmd,
        },
        CommandDef {
            name: "flow-holder",
            about: "Holder regularity and composition of the Euler flow",
            exercises: "|phi_(s,t)(x) - phi_(s,t)(y)| <= C |x - y|^alpha on compacts, and phi_(s,t) = phi_(u,t) o \
                        phi_(s,u)",
            params: const { &[
                p("drift", "checkerboard", "Drift identifier"),
                p("scheme", "direct", "direct or transformed"),
                p("noises", "20", "Number of noise paths"),
                p("noise-level", "12", "Noise grid level"),
                p("dt-level", "12", "Euler step is T 2^-dt-level"),
                p("x-points", "65", "Spatial sample points"),
                p("radius", "1", "Spatial sample radius"),
                p("time-level", "5", "s and t grids are dyadic at this level"),
                p("nx", "512", "PDE vertices (transformed scheme)"),
                p("nt", "1024", "PDE time steps (transformed scheme)"),
                p("target", "0.5", "PDE gradient target (transformed scheme)"),
                p("export", "false", "Write flow.bin for the first noise"),
            ] },
            run: flow_holder,
        },
        CommandDef {
            name: "net-count",
            about: "Cardinality and covering radius of the epsilon-net of Lip_N",
            exercises: "Lip_N on an interval of length l contains an epsilon-net of log-cardinality at most \
                        d log(2 ceil(2N/eps) + 1) + d ln3 (K - 1), K the knot count",
            params: const { &[
                p("l", "0.25", "Window length"),
                p("N", "1", "Sup-norm bound N"),
                p("eps", "0.125", "Net radius"),
                p("d", "1", "Dimension"),
                p("probes", "1000", "Random elements projected onto the net"),
                p("pieces", "6", "Linear pieces of each probe"),
                p("codes", "false", "Write codes.txt with every element code"),
            ] },
            run: net_count,
        },
        CommandDef {
            name: "chain",
            about: "Multiscale chaining modulus of shifted drift integrals",
            exercises: "sup over h1, h2 in Lip_N with |h1 - h2|_inf <= 4l of |int_r^u (b(s, W_s + h1) - b(s, W_s + h2)) \
                        ds| <= C l^(4/3) outside an event of probability exp(-c l^-zeta)",
            params: const { &[
                p("drift", "checkerboard", "Drift identifier"),
                p("l", "0.125", "Largest window length"),
                p("l-count", "5", "Number of halvings of l"),
                p("N", "1", "Sup-norm bound N"),
                p("trials", "1000", "Paths per l"),
                p("pairs", "512", "Sampled pairs per radius when the net is large"),
                p("c", "1", "Failure threshold constant c in c l^(4/3)"),
                p("quantile", "0.99", "Quantile reported as modulus_sup"),
                p("cells", "64", "Grid cells per window"),
            ] },
            run: chain,
        },
        CommandDef {
            name: "occupation",
            about: "Occupation time of the shifted path in an open set",
            exercises: "for each open set U, E int_0^1 1_U(s, W_s + h(s)) ds is small when the Lebesgue measure of U \
                        is small",
            params: const { &[
                p("boxes", "0,1,0,0.1", "Boxes t0,t1,x0,x1 separated by `;`"),
                p("shift", "0", "Constant perturbation h"),
                p("trials", "10000", "Number of paths"),
                p("level", "10", "Dyadic grid level"),
            ] },
            run: occupation,
        },
        CommandDef {
            name: "uniqueness",
            about: "Dyadic uniqueness certificate of candidate solutions against the flow",
            exercises: "for almost all Brownian paths the integral equation has a unique solution; \
                        f(t) = phi_(t,r)(Y_t) changes by O(M^(-16/15)) per step of r/M, so the endpoint gap is O(M^(-1/15))",
            params: const { &[
                p("drift", "checkerboard", "Drift identifier"),
                p("scheme", "restart-perturbed", "euler, euler-midpoint, picard, restart-perturbed or flow"),
                p("oracle", "transformed", "Flow oracle: direct or transformed"),
                p("r", "0.5", "Certificate horizon"),
                p("x0", "0", "Initial point"),
                p("m-min", "4", "Smallest level exponent (M = 2^m)"),
                p("m-max", "10", "Largest level exponent"),
                p("noises", "20", "Number of noise paths"),
                p("noise-level", "15", "Noise grid level"),
                p("oracle-level", "15", "Oracle Euler step is T 2^-oracle-level"),
                p("magnitude", "1", "Kick of the restart-perturbed scheme"),
                p("picard-iterations", "30", "Iterations of the picard scheme"),
                p("nx", "1024", "PDE vertices (transformed oracle)"),
                p("nt", "2048", "PDE time steps (transformed oracle)"),
                p("target", "0.5", "PDE gradient target"),
                p("export", "false", "Write noise.bin with the first noise path"),
            ] },
            run: uniqueness,
        },
        CommandDef {
            name: "continuity",
            about: "Continuity of the shifted drift integral along converging perturbations",
            exercises: "||h_1 - h_2||_inf <= 4l controls int b(s, W_s + h_1) - b(s, W_s + h_2) ds; along h_k -> h \
                        the integrals converge, compared against mollified drifts",
            params: const { &[
                p("drift", "checkerboard", "Drift identifier"),
                p("trials", "200", "Number of paths"),
                p("level", "12", "Dyadic grid level"),
                p("scales", "0.5,0.25,0.125,0.0625", "Decreasing blend weights s_k"),
                p("widths", "0.0625,0.03125,0.015625,0.0078125,0.00390625", "Mollification widths"),
                p("h", "0.1", "Constant limit perturbation"),
                p("g-peak", "0.5", "Peak of the triangular direction g"),
                p("N", "1", "Sup-norm bound N"),
            ] },
            run: continuity,
        },
    ]
}
