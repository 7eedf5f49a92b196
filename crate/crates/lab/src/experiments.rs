use std::f64::consts::PI;
use std::fmt::Display;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigidlab::bracketops::{
    d_power, ham_vector_field, has_multiplicity, phi_invariant, PairingConvention,
};
use rigidlab::fieldexpr::{grid_extremum, sup_norm, Extremum, GridBox};
use rigidlab::hamflow::{Flow, FlowOptions, Status};
use rigidlab::perturber::{
    local_perturbation, simulate_displacement, staircase_counterexample, DisplacementParams,
    LocalOptions, LocalProblem,
};
use rigidlab::ratemeter::{
    first_order_bound, higher_bound, rate_plot_svg, sharper_constant, theoretical_band,
    truncated_jet_bound, unicontinuity_criterion, upsilon_upper_curve, Band, RateError,
    CSV_SCHEMA,
};
use rigidlab::scenarios::Scenario;
use rigidlab::trigfact::{
    binomial, fejer_riesz_detailed, max_on_circle, mean_bound, random_analytic, TrigPoly,
};
use rigidlab::Exec;

use crate::config::{Experiment, ExperimentConfig};
use crate::plots;
use crate::report::{CheckResult, Outcome};

/// A configuration problem (exit 2) or a failure while running (exit 1).
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Runtime(String),
}

impl<E: std::error::Error> From<E> for RunError {
    fn from(e: E) -> Self {
        RunError::Runtime(e.to_string())
    }
}

fn config<T>(msg: impl Display) -> Result<T, RunError> {
    Err(RunError::Config(msg.to_string()))
}

const DEFAULT_SWEEP: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];
const DEFAULT_DISPLACEMENT: [f64; 3] = [1e-3, 1e-4, 1e-5];
const DEFAULT_FAMILY: [usize; 4] = [1, 4, 16, 64];
const DEFAULT_STAIRCASE: [usize; 3] = [5, 20, 100];
const DEFAULT_RANDOM: usize = 20;
const FACTOR_RESIDUAL: f64 = 1e-8;
const SLOPE_RANGE: (f64, f64) = (0.64, 0.70);

pub fn run(sc: &Scenario, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match cfg.experiment() {
        Experiment::RateSweep => rate_sweep(sc, cfg),
        Experiment::DisplacementSim => displacement_sim(sc, cfg),
        Experiment::Factorize => factorize(sc, cfg),
        Experiment::Counterexample => counterexample(sc, cfg),
        Experiment::Unicontinuity => unicontinuity(sc, cfg),
        Experiment::BoundsReport => bounds_report(sc, cfg),
    }
}

fn csv_text(kind: &str, meta: &str, header: &[&str], rows: &[Vec<String>]) -> Result<String, RunError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    let body = String::from_utf8(buf).map_err(|e| RunError::Runtime(e.to_string()))?;
    Ok(format!("{CSV_SCHEMA} {kind} {meta}\n{body}"))
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn conv_of(sc: &Scenario, what: Experiment) -> Result<&PairingConvention, RunError> {
    match &sc.conv {
        Some(c) => Ok(c),
        None => config(format!("{what} needs a symplectic scenario; {} has a custom operator", sc.name)),
    }
}

fn problem_of(sc: &Scenario, what: Experiment) -> Result<LocalProblem, RunError> {
    conv_of(sc, what)?;
    sc.local_problem().map_err(|e| RunError::Config(e.to_string()))
}

/// The band at `x`, or a config error when `x` is a degenerate maximum.
fn band_of(sc: &Scenario, conv: &PairingConvention, what: Experiment) -> Result<Band, RunError> {
    match theoretical_band(&sc.f, &sc.g, std::slice::from_ref(&sc.x), conv) {
        Ok(b) => Ok(b),
        Err(RateError::DegenerateCritical { det, .. }) => config(format!(
            "{what} needs a nondegenerate maximum (det Hessian = {det:e} at x in {}); try bounds-report",
            sc.name
        )),
        Err(e) => Err(e.into()),
    }
}

/// Largest `l ≤ 3` with `h − h(x)` vanishing to order `2l` at `x`.
fn multiplicity(sc: &Scenario, what: Experiment) -> Result<usize, RunError> {
    let h = sc.h()?;
    let mut best = 0;
    for l in 1..=3 {
        if has_multiplicity(&h, &sc.x, l, 1e-8)? {
            best = l;
        } else {
            break;
        }
    }
    if best == 0 {
        return config(format!("{what}: x is not a critical point of h in {}", sc.name));
    }
    Ok(best)
}

fn local_opts(cfg: &ExperimentConfig) -> LocalOptions {
    LocalOptions {
        resolution: cfg.resolution.unwrap_or(LocalOptions::default().resolution),
        ..LocalOptions::default()
    }
}

fn rate_sweep(sc: &Scenario, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let what = Experiment::RateSweep;
    let problem = problem_of(sc, what)?;
    let band = band_of(sc, &problem.conv, what)?;
    let eps = cfg.eps.clone().unwrap_or(DEFAULT_SWEEP.to_vec());
    let opts = local_opts(cfg);
    let table = upsilon_upper_curve(&problem, &eps, band, &opts)?;
    let res = format!("grid {0}x{0} on U", opts.resolution);

    let mut out = Outcome::default();
    out.check(CheckResult::at_least(
        "epsilons below eps0",
        table.points.len() as f64,
        eps.len() as f64,
        "requested list",
    ));
    for p in &table.points {
        out.check(CheckResult::within(
            &format!("gap/eps^(2/3) at eps={:e}", p.eps),
            p.ratio,
            table.band.lower,
            table.band.upper,
            &res,
        ));
    }
    match table.fit {
        Some(fit) => out.check(CheckResult::within(
            "log-log slope",
            fit.slope,
            SLOPE_RANGE.0,
            SLOPE_RANGE.1,
            &format!("{} points, {res}", fit.points),
        )),
        None => out.data("fit", &"fewer than four points; slope not fitted"),
    }
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    out.csv.push((
        "rate-sweep.csv".into(),
        String::from_utf8(csv).map_err(|e| RunError::Runtime(e.to_string()))?,
    ));
    out.svg.push(("rate-sweep.svg".into(), rate_plot_svg(&table)));
    out.data("table", &table);
    out.data("grid_points_per_axis", &opts.resolution);
    Ok(out)
}

fn displacement_sim(sc: &Scenario, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let what = Experiment::DisplacementSim;
    let problem = problem_of(sc, what)?;
    band_of(sc, &problem.conv, what)?;
    let eps = cfg.eps.clone().unwrap_or(DEFAULT_DISPLACEMENT.to_vec());
    let opts = local_opts(cfg);
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    let mut snapshot = None;
    let mut outcomes = Vec::new();
    for &e in &eps {
        let lp = local_perturbation(&problem, e, &opts)?;
        let mut params = DisplacementParams::default();
        if let Some(t) = cfg.t {
            params = params.with_t(t);
        }
        if let Some(r) = cfg.r {
            params = params.with_r(r);
        }
        if let Some(a) = cfg.alpha {
            params = params.with_alpha(a);
        }
        if let Some(s) = cfg.samples {
            params = params.with_samples(s);
        }
        let d = simulate_displacement(&problem, &lp, &params, Exec::Auto)?;
        let res = format!(
            "{} slab samples ({} draws), {} flow steps, U grid {}^{}",
            d.slab_size,
            d.slab_draws,
            params.steps,
            params.u_resolution,
            problem.x.len()
        );
        out.check(CheckResult::at_least(
            &format!("displacement inequality margin at eps={e:e}"),
            d.inequality.lhs - d.inequality.rhs,
            0.0,
            &res,
        ));
        out.check(CheckResult::above(
            &format!("separation margin at eps={e:e}"),
            d.separation.margin,
            0.0,
            &res,
        ));
        out.check(CheckResult::above(
            &format!("hofer upper minus slab energy at eps={e:e}"),
            d.hofer_upper - d.energy_lower,
            0.0,
            &res,
        ));
        out.check(CheckResult::at_most(
            &format!("incomplete trajectories at eps={e:e}"),
            d.incomplete as f64,
            0.0,
            &res,
        ));
        rows.push(vec![
            num(e),
            num(d.t),
            num(d.r),
            num(d.alpha),
            num(d.delta),
            num(d.inequality.lhs),
            num(d.inequality.rhs),
            num(d.separation.margin),
            d.separation.separated.to_string(),
            num(d.hofer_upper),
            num(d.energy_lower),
            d.slab_size.to_string(),
            d.incomplete.to_string(),
        ]);
        if snapshot.is_none() {
            snapshot = Some((e, d.cloud.clone(), d.image_a.clone(), d.image_b.clone()));
        }
        outcomes.push(d);
    }
    out.csv.push((
        "displacement.csv".into(),
        csv_text(
            "displacement",
            &format!("grid={}", opts.resolution),
            &[
                "eps", "t", "r", "alpha", "delta", "lhs", "rhs", "margin", "separated",
                "hofer_upper", "energy_lower", "slab", "incomplete",
            ],
            &rows,
        )?,
    ));
    if let Some((e, w, a, b)) = snapshot {
        let mut cloud_rows = Vec::new();
        for (label, pts) in [("W", &w), ("A", &a), ("B", &b)] {
            for (i, p) in pts.iter().enumerate() {
                let mut row = vec![label.to_string(), i.to_string()];
                row.extend(p.iter().map(|v| num(*v)));
                cloud_rows.push(row);
            }
        }
        let mut header = vec!["set".to_string(), "index".to_string()];
        header.extend(sc.chart.names().iter().cloned());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv.push((
            "displacement-cloud.csv".into(),
            csv_text("displacement-cloud", &format!("eps={e:e}"), &header, &cloud_rows)?,
        ));
        let proj = |pts: &Vec<Vec<f64>>| pts.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>();
        let names = sc.chart.names();
        out.svg.push((
            "displacement-cloud.svg".into(),
            plots::scatter(
                &[
                    ("W", "black", proj(&w)),
                    ("flow of g", "steelblue", proj(&a)),
                    ("flow of G", "firebrick", proj(&b)),
                ],
                &names[0],
                &names[1],
            ),
        ));
    }
    let summary: Vec<_> = outcomes
        .iter()
        .map(|d| {
            serde_json::json!({
                "eps": d.eps,
                "t": d.t,
                "r": d.r,
                "alpha": d.alpha,
                "params": d.params,
                "delta": d.delta,
                "h_second": d.h_second,
                "speed": d.speed,
                "inequality": d.inequality,
                "separation": d.separation,
                "hofer_upper": d.hofer_upper,
                "energy_lower": d.energy_lower,
                "slab_size": d.slab_size,
                "slab_draws": d.slab_draws,
            })
        })
        .collect();
    out.data("runs", &summary);
    Ok(out)
}

fn factorize(sc: &Scenario, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let what = Experiment::Factorize;
    let conv = conv_of(sc, what)?;
    let l = multiplicity(sc, what)?;
    let c = rigidlab::bracketops::p_theta_coefficients(&sc.f, &sc.g, &sc.x, l, conv)?;
    let p = TrigPoly::from_cos_sin(&c);
    let mut out = Outcome::default();
    let grid = format!("{} circle samples", rigidlab::trigfact::NONNEG_GRID);

    let fact = fejer_riesz_detailed(&p)?;
    out.check(CheckResult::at_most(
        "P = |Q|^2 residual",
        fact.residual,
        FACTOR_RESIDUAL,
        &grid,
    ));
    let mb = mean_bound(&p, l)?;
    out.check(CheckResult::at_most("max P - (2l+1) mean P", mb.max_p - mb.bound, 1e-9, &grid));

    // Σ C(l,m) H_{2m} = −D^l(h)(x) with H_k = c_k / C(2l,k).
    let lhs: f64 = (0..=l)
        .map(|m| {
            binomial(l as u64, m as u64) * c[2 * m] / binomial(2 * l as u64, 2 * m as u64)
        })
        .sum();
    let d = d_power(l, &sc.h()?, &sc.f, &sc.g, conv)?.eval(&sc.x)?;
    out.check(CheckResult::at_most(
        "|sum C(l,m) H_2m + D^l(h)(x)|",
        (lhs + d).abs(),
        1e-6 * (1.0 + d.abs()),
        "exact coefficients",
    ));
    if l == 1 {
        let phi = phi_invariant(&sc.f, &sc.g, conv)?.eval(&sc.x)?;
        let dev = (0..720)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / 720.0;
                (p.eval_real(th) + p.eval_real(th + PI / 2.0) - phi).abs()
            })
            .fold(0.0, f64::max);
        out.check(CheckResult::at_most("|P(t) + P(t + pi/2) - Phi(x)|", dev, 1e-9, "720 samples"));
        out.data("phi", &phi);
    }

    let mut rows = Vec::new();
    let q2 = fact.q.abs_squared();
    for k in 0..360 {
        let th = 2.0 * PI * k as f64 / 360.0;
        rows.push(vec![num(th), num(p.eval_real(th)), num(q2.eval_real(th))]);
    }
    out.csv.push((
        "factorize.csv".into(),
        csv_text("factorize", &format!("l={l}"), &["theta", "P", "absQ2"], &rows)?,
    ));
    out.svg.push((
        "factorize.svg".into(),
        plots::lines(
            &[
                ("P", "black", rows_xy(&p, 360)),
                ("|Q|^2", "firebrick", rows_xy(&q2, 360)),
            ],
            "theta",
            "P",
        ),
    ));

    let count = cfg.random.unwrap_or(DEFAULT_RANDOM);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let mut random_rows = Vec::new();
    let mut worst = 0.0f64;
    let mut bound_ok = true;
    for i in 0..count {
        let deg = rng.gen_range(1..=6usize);
        let q = random_analytic(&mut rng, deg);
        let pr = q.abs_squared();
        let (max_p, _) = max_on_circle(&pr, rigidlab::trigfact::NONNEG_GRID);
        let res = match fejer_riesz_detailed(&pr) {
            Ok(f) => f.residual,
            Err(_) => f64::INFINITY,
        };
        let mb = mean_bound(&pr, deg)?;
        worst = worst.max(res / (1.0 + max_p));
        bound_ok &= mb.holds;
        random_rows.push(vec![
            i.to_string(),
            deg.to_string(),
            num(res),
            num(max_p),
            num(mb.mean),
            mb.holds.to_string(),
        ]);
    }
    if count > 0 {
        out.check(CheckResult::at_most(
            "random |Q|^2 worst relative residual",
            worst,
            FACTOR_RESIDUAL,
            &format!("{count} instances, seed {}", cfg.seed()),
        ));
        out.check(CheckResult::flag("random mean bounds hold", bound_ok, &grid));
        out.csv.push((
            "factorize-random.csv".into(),
            csv_text(
                "factorize-random",
                &format!("seed={}", cfg.seed()),
                &["index", "degree", "residual", "max_p", "mean", "mean_bound"],
                &random_rows,
            )?,
        ));
    }
    out.data("l", &l);
    out.data("p_cos_sin_coefficients", &c);
    out.data("mean_bound", &mb);
    let roots: Vec<_> = fact
        .roots
        .roots
        .iter()
        .map(|r| serde_json::json!({"re": r.value.re, "im": r.value.im, "multiplicity": r.multiplicity}))
        .collect();
    out.data("roots", &roots);
    Ok(out)
}

fn rows_xy(p: &TrigPoly, n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / n as f64;
            (th, p.eval_real(th))
        })
        .collect()
}

fn family_indices(cfg: &ExperimentConfig, default: &[usize]) -> Vec<usize> {
    cfg.n.clone().unwrap_or(default.to_vec())
}

/// Start and time horizon of the blow-up probe for scenarios whose
/// Hamiltonian flows are expected to be incomplete.
fn blowup_probe(sc: &Scenario) -> Option<(Vec<f64>, f64)> {
    (sc.name == "incomplete_flow").then(|| (vec![0.0, 0.0, -0.9, 0.0], 5.0))
}

fn counterexample(sc: &Scenario, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let what = Experiment::Counterexample;
    if sc.family.is_none() {
        return config(format!("{what} needs a scenario with a family; {} has none", sc.name));
    }
    let mut out = Outcome::default();
    let grid = format!("grid {:?}", sc.domain.resolution());
    for o in sc.verify()? {
        let tol = rigidlab::scenarios::REFERENCE_TOL * (1.0 + o.expected.abs());
        let mut c = CheckResult::at_most(
            &format!("reference {} ({})", o.name, o.source),
            (o.measured - o.expected).abs(),
            tol,
            &grid,
        );
        c.passed = o.passed;
        out.check(c);
    }

    let mut rows = Vec::new();
    if let (None, Some(h)) = (&sc.conv, sc.extra("h")) {
        for n in family_indices(cfg, &DEFAULT_STAIRCASE) {
            let s = staircase_counterexample(&sc.operator, h, n, &sc.domain)?;
            let r = s.report(Exec::Auto)?;
            out.check(CheckResult::at_most(&format!("sup |B(f_{n},g_{n})|"), r.max_image, 1e-12, &grid));
            out.check(CheckResult::at_most(
                &format!("sup |f_{n} - h|"),
                r.f_deviation,
                2.0 / n as f64,
                &grid,
            ));
            rows.push(vec![
                n.to_string(),
                num(r.max_image),
                num(r.f_deviation),
                num(r.g_deviation),
                String::new(),
            ]);
        }
    } else {
        let default: &[usize] = if sc.name == "polterovich" { &DEFAULT_FAMILY } else { &[1, 2, 5] };
        let chi_sup = match sc.extra("chi") {
            Some(chi) => Some(sup_norm(chi, &sc.domain)?.value),
            None => None,
        };
        for n in family_indices(cfg, default) {
            let (fx, gx) = sc.family_member(n)?;
            let b = sc.bracket(&fx, &gx)?;
            let bmax = grid_extremum(|p| b.eval(p), &sc.domain, Extremum::MaxAbs, Exec::Auto)?.value;
            let df = sup_norm(&(&fx - &sc.f), &sc.domain)?.value;
            let dg = sup_norm(&(&gx - &sc.g), &sc.domain)?.value;
            if let Some(c) = chi_sup {
                let bound = c / (n as f64).sqrt();
                out.check(CheckResult::at_most(
                    &format!("sup |f_{n} - f|"),
                    df,
                    bound * (1.0 + 1e-9),
                    &grid,
                ));
                out.check(CheckResult::at_most(
                    &format!("sup |g_{n} - g|"),
                    dg,
                    bound * (1.0 + 1e-9),
                    &grid,
                ));
            }
            let mut blow = String::new();
            if let (Some((start, horizon)), Some(conv)) = (blowup_probe(sc), &sc.conv) {
                let flow = Flow::new(&gx, conv)?;
                let traj = flow.integrate(
                    &start,
                    horizon,
                    &sc.domain,
                    &FlowOptions::with_step(1e-3).endpoints_only(),
                )?;
                let t_star = match traj.status {
                    Status::LeftDomain(t) | Status::Diverged(t) => Some(t),
                    Status::Completed => None,
                };
                out.check(CheckResult::flag(
                    &format!("flow of g_{n} from {start:?} leaves the domain before t={horizon}"),
                    t_star.is_some(),
                    "step 1e-3",
                ));
                blow = t_star.map(num).unwrap_or_default();
            }
            rows.push(vec![n.to_string(), num(bmax), num(df), num(dg), blow]);
        }
    }
    out.csv.push((
        "counterexample.csv".into(),
        csv_text(
            "counterexample",
            &grid.replace(' ', "="),
            &["n", "sup_abs_bracket", "sup_f_dev", "sup_g_dev", "blowup_time"],
            &rows,
        )?,
    ));
    out.data("expectations", &sc.expect);
    Ok(out)
}

fn unicontinuity(sc: &Scenario, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let what = Experiment::Unicontinuity;
    if sc.family.is_none() {
        return config(format!("{what} needs a scenario with a family; {} has none", sc.name));
    }
    let ns = family_indices(cfg, &DEFAULT_FAMILY);
    let mut fs = Vec::new();
    let mut gs = Vec::new();
    for &n in &ns {
        let (f, g) = sc.family_member(n)?;
        fs.push(f);
        gs.push(g);
    }
    let u = unicontinuity_criterion(&sc.f, &sc.g, &fs, &gs, &sc.domain)?;
    let grid = format!("grid {:?}", sc.domain.resolution());
    let mut out = Outcome::default();
    // For a family tending to zero, the product settles at ‖χ‖².
    if let (true, Some(chi)) = (sc.f.is_zero() && sc.g.is_zero(), sc.extra("chi")) {
        let target = sup_norm(chi, &sc.domain)?.value.powi(2);
        out.check(CheckResult::at_most(
            &format!("|product(n={}) / sup chi^2 - 1|", ns.last().unwrap()),
            (u.last / target - 1.0).abs(),
            0.05,
            &grid,
        ));
        out.data("chi_sup_squared", &target);
    }
    let rows: Vec<Vec<String>> = u
        .rows
        .iter()
        .map(|r| vec![ns[r.index].to_string(), num(r.distance), num(r.g_c1), num(r.product)])
        .collect();
    out.csv.push((
        "unicontinuity.csv".into(),
        csv_text(
            "unicontinuity",
            &grid.replace(' ', "="),
            &["n", "distance", "g_c1", "product"],
            &rows,
        )?,
    ));
    let pts: Vec<(f64, f64)> = u.rows.iter().map(|r| ((ns[r.index] as f64).log10(), r.product)).collect();
    out.svg.push((
        "unicontinuity.svg".into(),
        plots::lines(&[("product", "black", pts)], "log10 n", "product"),
    ));
    out.data("unicontinuity", &u);
    Ok(out)
}

fn bounds_report(sc: &Scenario, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let what = Experiment::BoundsReport;
    let conv = conv_of(sc, what)?;
    let l = multiplicity(sc, what)?;
    let eps = cfg.eps.clone().unwrap_or(DEFAULT_SWEEP.to_vec());
    let mut out = Outcome::default();
    let h = sc.h()?;
    let hx = h.eval(&sc.x)?;

    let hb = higher_bound(l, &sc.f, &sc.g, &sc.x, conv)?;
    out.check(CheckResult::at_most(&format!("D^{l}(h)(x)"), hb.d_value, 0.0, "exact"));
    out.data("higher_bound", &hb);

    let band = theoretical_band(&sc.f, &sc.g, std::slice::from_ref(&sc.x), conv).ok();
    let sharper = if l == 1 {
        let s = sharper_constant(&sc.f, &sc.g, &sc.x, conv)?;
        if let Some(b) = &band {
            out.check(CheckResult::at_most(
                "sharper constant / (6 Phi^(1/3))",
                s / b.upper,
                1.0 + 1e-12,
                "4096 circle samples",
            ));
        }
        Some(s)
    } else {
        None
    };
    out.data("band", &band);
    out.data("sharper_constant", &sharper);

    let region = GridBox::cube(&sc.x, 0.5, 41)?;
    let vg = ham_vector_field(&sc.g, conv)?;
    let mut rows = Vec::new();
    for &e in &eps {
        let jet = truncated_jet_bound(l, e, &sc.f, &sc.g, conv, &region)?;
        let first = if l == 1 {
            first_order_bound(&vg, &sc.f, &sc.x, e).ok()
        } else {
            None
        };
        if let Some(fb) = &first {
            out.check(CheckResult::at_most(
                &format!("first-order bound below h(x) at eps={e:e}"),
                fb.value,
                hx,
                "exact",
            ));
        }
        let scale = e.powf(2.0 / 3.0);
        rows.push(vec![
            num(e),
            num(jet.value),
            jet.clamped.to_string(),
            first.map(|f| num(f.value)).unwrap_or_default(),
            band.as_ref().map(|b| num(b.lower * scale)).unwrap_or_default(),
            band.as_ref().map(|b| num(b.upper * scale)).unwrap_or_default(),
            num(hb.value * e.powf(2.0 * l as f64 / (2.0 * l as f64 + 1.0))),
        ]);
    }
    out.csv.push((
        "bounds.csv".into(),
        csv_text(
            "bounds",
            &format!("l={l} jet-grid=41^{}", sc.dim()),
            &["eps", "jet_bound", "jet_clamped", "first_order", "band_lo", "band_hi", "higher_drop"],
            &rows,
        )?,
    ));
    out.data("l", &l);
    out.data("h_x", &hx);
    Ok(out)
}
