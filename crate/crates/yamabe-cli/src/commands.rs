use crate::config::{CaseMode, ConfigError, RunConfig};
use crate::csvio::{nodal_table, read_nodal, series_table};
use crate::{Common, ForcedCase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use thiserror::Error;
use yamabe_lab::barriers::{
    case_zero, choose_shift, equation_rows, polish_null_vector, positive_constants, residual_scale, BarrierPair, CaseTag, Diagnostics,
    PositiveOptions,
};
use yamabe_lab::geometry::RadialGeometry;
use yamabe_lab::linalg::{bisection_smallest_eig, smallest_eig_generalized, solve_banded, solve_dense};
use yamabe_lab::operators::{assemble, box_system, check_maximum_principle, mean_curvature_of_conformal, scalar_curvature_of_conformal};
use yamabe_lab::solver::{continuation, monotone_iterate, shifted_system, solve_negative, ContinuationOptions, IterationReport};
use yamabe_lab::spectral::{classify, first_eigen, minimize_yamabe_quotient, sharp_bound, EigenClass, MinimizeOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("pipeline stage {stage}: {message}")]
    Pipeline { stage: String, message: String },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Pipeline { .. } => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn pipeline(stage: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline { stage: stage.to_string(), message: e.to_string() }
}

/// Tolerances of the verification block.
const CURVATURE_TOL: f64 = 1e-4;
const ROW_TOL: f64 = 1e-6;
const ENERGY_TOL: f64 = 1e-6;

struct Run {
    cfg: RunConfig,
    out: PathBuf,
}

impl Run {
    fn load(c: &Common) -> Result<Run, CliError> {
        let mut cfg = RunConfig::load(&c.config)?;
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(l) = c.lambda {
            cfg.lambda = Some(l);
        }
        if let Some(f) = c.force_case {
            cfg.mode = match f {
                ForcedCase::Zero => CaseMode::Zero,
                ForcedCase::Negative => CaseMode::Negative,
                ForcedCase::Positive => CaseMode::Positive,
            };
        }
        let out = c.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
        Ok(Run { cfg, out })
    }

    fn ensure_out(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", self.out.display())))
    }

    fn csv(&self, name: &str, text: &str) -> Result<(), CliError> {
        if !self.cfg.write_csv {
            return Ok(());
        }
        self.ensure_out()?;
        let p = self.out.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))
    }

    fn json(&self, name: &str, v: &Value) -> Result<(), CliError> {
        if !self.cfg.write_json {
            return Ok(());
        }
        self.ensure_out()?;
        let p = self.out.join(name);
        let text = serde_json::to_string_pretty(v).expect("report serializes") + "\n";
        std::fs::write(&p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))
    }

    fn minimize(&self) -> MinimizeOptions {
        MinimizeOptions { seed: self.cfg.seed, restarts: self.cfg.restarts, ..MinimizeOptions::default() }
    }

    fn geometry(&self) -> Result<RadialGeometry, CliError> {
        self.cfg.geometry.build().map_err(|e| CliError::Config(format!("geometry: {e}")))
    }
}

fn sup_normalized(phi: &[f64]) -> Vec<f64> {
    let s = phi.iter().cloned().fold(0.0, f64::max);
    phi.iter().map(|x| x / s).collect()
}

pub fn eigen(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let geom = run.geometry()?;
    let cl = classify(&run.cfg.geometry).map_err(|e| pipeline("classify", e))?;
    let lam_m = minimize_yamabe_quotient(&geom, 0.0, &run.minimize()).map_err(|e| pipeline("lambda_m", e))?;
    let bound = sharp_bound(geom.dim.n);
    println!("eta1 = {:.12e}", cl.eta1);
    println!("classification = {}", cl.class);
    println!("zero threshold = {:.6e}", cl.threshold);
    println!("lambda(M) = {:.12e}", lam_m.lambda);
    println!("hemisphere bound = {:.12e}", bound);
    let phi = sup_normalized(&cl.phi);
    run.csv("eigenfunction.csv", &nodal_table(&geom.nodes, &[("value", &phi)]))?;
    run.csv("minimizer.csv", &nodal_table(&geom.nodes, &[("value", &lam_m.minimizer)]))?;
    run.json(
        "eigen.json",
        &json!({
            "command": "eigen",
            "config": run.cfg.echo,
            "classification": cl,
            "lambda_m": lam_m,
            "hemisphere_bound": bound,
            "lambda_m_below_bound": lam_m.lambda <= bound + 1e-6,
        }),
    )
}

/// Everything `verify` recomputes for a stored field.
#[derive(Debug, Serialize)]
pub struct VerifyBlock {
    pub lambda: f64,
    pub zeta: f64,
    pub positive: bool,
    pub first_nonpositive: Option<usize>,
    pub curvature_deviation: f64,
    pub curvature_worst_node: usize,
    pub curvature_tol: f64,
    pub h_inner: f64,
    pub h_outer: f64,
    pub mean_curvature_deviation: f64,
    pub mean_curvature_tol: f64,
    pub row_residual: f64,
    pub row_worst_node: usize,
    pub row_tol: f64,
    pub energy_defect: f64,
    pub energy_tol: f64,
    pub max_principle_applicable: bool,
    pub max_principle_holds: bool,
    pub passed: bool,
    #[serde(skip)]
    pub r_tilde: Vec<f64>,
}

impl VerifyBlock {
    fn failures(&self) -> Vec<String> {
        let mut f = Vec::new();
        if !self.positive {
            f.push(format!("positivity at node {}", self.first_nonpositive.unwrap_or(0)));
            return f;
        }
        if !(self.curvature_deviation <= self.curvature_tol) {
            f.push(format!(
                "scalar curvature deviation {:e} > {:e} at node {}",
                self.curvature_deviation, self.curvature_tol, self.curvature_worst_node
            ));
        }
        if !(self.mean_curvature_deviation <= self.mean_curvature_tol) {
            f.push(format!("mean curvature deviation {:e} > {:e}", self.mean_curvature_deviation, self.mean_curvature_tol));
        }
        if !(self.row_residual <= self.row_tol) {
            f.push(format!("equation residual {:e} > {:e} at node {}", self.row_residual, self.row_tol, self.row_worst_node));
        }
        if !(self.energy_defect <= self.energy_tol) {
            f.push(format!("energy identity defect {:e} > {:e}", self.energy_defect, self.energy_tol));
        }
        if !self.max_principle_holds {
            f.push("discrete maximum principle".into());
        }
        f
    }
}

/// Curvatures of u^{p−2}g against (λ, ζ), the discrete equation rows, the
/// energy identity uᵀKu = λΣMu^p + aζ(2/(p−2))Σ_∂ S u^{p/2+1}, and the maximum principle.
pub fn verify_field(geom: &RadialGeometry, u: &[f64], lambda: f64, zeta: f64) -> VerifyBlock {
    let p = geom.dim.p;
    let first_nonpositive = u.iter().position(|&x| !(x > 0.0));
    let mut b = VerifyBlock {
        lambda,
        zeta,
        positive: first_nonpositive.is_none(),
        first_nonpositive,
        curvature_deviation: f64::INFINITY,
        curvature_worst_node: first_nonpositive.unwrap_or(0),
        curvature_tol: CURVATURE_TOL * lambda.abs().max(1.0),
        h_inner: f64::NAN,
        h_outer: f64::NAN,
        mean_curvature_deviation: f64::INFINITY,
        mean_curvature_tol: CURVATURE_TOL * zeta.max(1.0),
        row_residual: f64::INFINITY,
        row_worst_node: 0,
        row_tol: f64::NAN,
        energy_defect: f64::INFINITY,
        energy_tol: ENERGY_TOL,
        max_principle_applicable: false,
        max_principle_holds: false,
        passed: false,
        r_tilde: vec![],
    };
    if !b.positive {
        return b;
    }
    let rt = scalar_curvature_of_conformal(geom, u).expect("positive field of matching length");
    let (h0, h1) = mean_curvature_of_conformal(geom, u).expect("positive field of matching length");
    let (node, dev) = rt.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, x)| {
        let d = (x - lambda).abs();
        if d > bv {
            (i, d)
        } else {
            (bi, bv)
        }
    });
    b.curvature_deviation = dev;
    b.curvature_worst_node = node;
    b.h_inner = h0;
    b.h_outer = h1;
    b.mean_curvature_deviation = (h0 - zeta).abs().max((h1 - zeta).abs());
    b.r_tilde = rt;

    let sys = box_system(geom, 0.0).expect("geometry already validated");
    let rows = equation_rows(geom, &sys, lambda, zeta, u);
    let (rn, rv) = rows.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
    b.row_residual = rv;
    b.row_worst_node = rn;
    b.row_tol = ROW_TOL * residual_scale(geom, 0.0, lambda, u);

    let grad: f64 = sys.edge.iter().enumerate().map(|(i, w)| w * (u[i] - u[i + 1]).powi(2)).sum();
    let zeroth: f64 = sys.zeroth.iter().zip(u).map(|(z, x)| z * x * x).sum();
    let pot: f64 = sys.mass.iter().zip(u).map(|(m, x)| m * lambda * x.powf(p)).sum();
    let rc = geom.dim.robin_coeff;
    let (s0, s1) = geom.bdry_weights;
    let last = u.len() - 1;
    let bdry = geom.dim.a * rc * zeta * (s0 * u[0].powf(0.5 * p + 1.0) + s1 * u[last].powf(0.5 * p + 1.0));
    let total = grad.abs() + zeroth.abs() + pot.abs() + bdry.abs();
    b.energy_defect = (grad + zeroth - pot - bdry).abs() / total.max(f64::MIN_POSITIVE);

    let smin = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift = choose_shift(geom, 0.0, lambda, smin, smax);
    if let Ok(sys_a) = shifted_system(geom, shift) {
        let mp = check_maximum_principle(&sys_a, u);
        b.max_principle_applicable = mp.applicable;
        b.max_principle_holds = mp.holds;
    }
    b.passed = b.failures().is_empty();
    b
}

fn print_verify(b: &VerifyBlock) {
    let line = |name: &str, ok: bool, detail: String| println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    line("positivity", b.positive, format!("first nonpositive node {:?}", b.first_nonpositive));
    line(
        "scalar curvature",
        b.curvature_deviation <= b.curvature_tol,
        format!("max |R - lambda| = {:.3e} at node {} (tol {:.1e})", b.curvature_deviation, b.curvature_worst_node, b.curvature_tol),
    );
    line(
        "mean curvature",
        b.mean_curvature_deviation <= b.mean_curvature_tol,
        format!("h = ({:.6e}, {:.6e}), max |h - zeta| = {:.3e}", b.h_inner, b.h_outer, b.mean_curvature_deviation),
    );
    line(
        "equation rows",
        b.row_residual <= b.row_tol,
        format!("max row {:.3e} at node {} (tol {:.1e})", b.row_residual, b.row_worst_node, b.row_tol),
    );
    line("energy identity", b.energy_defect <= b.energy_tol, format!("relative defect {:.3e}", b.energy_defect));
    line("maximum principle", b.max_principle_holds, format!("applicable {}", b.max_principle_applicable));
}

fn iteration_csvs(run: &Run, geom: &RadialGeometry, rep: &IterationReport) -> Result<(), CliError> {
    run.csv("residuals.csv", &series_table(&[("residual", &rep.residual_history), ("increment", &rep.increment_history)]))?;
    let names: Vec<String> = rep.iterates_kept.iter().map(|(k, _)| format!("u_{k}")).collect();
    let cols: Vec<(&str, &[f64])> = names.iter().zip(&rep.iterates_kept).map(|(n, (_, u))| (n.as_str(), u.as_slice())).collect();
    if !cols.is_empty() {
        run.csv("iterates.csv", &nodal_table(&geom.nodes, &cols))?;
    }
    Ok(())
}

fn barrier_csv(run: &Run, geom: &RadialGeometry, pair: &BarrierPair) -> Result<(), CliError> {
    run.csv("barriers.csv", &nodal_table(&geom.nodes, &[("u_minus", &pair.u_minus), ("u_plus", &pair.u_plus)]))
}

struct Solved {
    case: EigenClass,
    u: Vec<f64>,
    lambda: f64,
    zeta: f64,
    extra: Value,
}

fn solve_zero(run: &Run, geom: &RadialGeometry) -> Result<Solved, CliError> {
    let spec = &run.cfg.geometry;
    let (eta1, phi, threshold, box_residual) = if run.cfg.mode == CaseMode::Zero {
        // forced: take the eigenfunction whatever the class
        let cl = classify(spec).map_err(|e| pipeline("classify", e))?;
        let phi = sup_normalized(&cl.phi);
        let sys = box_system(geom, 0.0).map_err(|e| pipeline("operator", e))?;
        let res = equation_rows(geom, &sys, 0.0, 0.0, &phi).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (cl.eta1, phi, cl.threshold, res)
    } else {
        let z = case_zero(spec).map_err(|e| pipeline("zero", e))?;
        (z.eta1, z.phi, z.threshold, z.box_residual)
    };
    // φ is an exact fixed point once the frame absorbs the discrete η₁
    let (eta_seed, seed) = polish_null_vector(geom, eta1, &phi).map_err(|e| pipeline("seed", e))?;
    let shifted = geom.with_frame_shift(-eta_seed);
    let pair = BarrierPair::validated(
        &shifted,
        seed.clone(),
        seed,
        0.0,
        0.0,
        0.0,
        CaseTag::ZeroEigen,
        Diagnostics { eta1: Some(eta1), ..Default::default() },
    )
    .map_err(|e| pipeline("barrier", e))?;
    let rep = monotone_iterate(&shifted, &pair, run.cfg.tol, run.cfg.max_iter).map_err(|e| pipeline("iterate", e))?;
    barrier_csv(run, geom, &pair)?;
    iteration_csvs(run, geom, &rep)?;
    Ok(Solved {
        case: EigenClass::Zero,
        u: phi,
        lambda: 0.0,
        zeta: 0.0,
        extra: json!({
            "eta1": eta1,
            "threshold": threshold,
            "box_residual": box_residual,
            "diagnostics": pair.diagnostics,
            "iteration": rep,
        }),
    })
}

fn solve_negative_case(run: &Run, geom: &RadialGeometry) -> Result<Solved, CliError> {
    let (pair, cap, rep) = solve_negative(geom, run.cfg.lambda, run.cfg.tol, run.cfg.max_iter).map_err(|e| pipeline("negative", e))?;
    barrier_csv(run, geom, &pair)?;
    iteration_csvs(run, geom, &rep)?;
    Ok(Solved {
        case: EigenClass::Negative,
        u: rep.solution.clone(),
        lambda: pair.lambda,
        zeta: pair.zeta,
        extra: json!({ "diagnostics": pair.diagnostics, "zeta_cap": cap, "iteration": rep }),
    })
}

fn solve_positive(run: &Run, geom: &RadialGeometry) -> Result<Solved, CliError> {
    let mut opts = ContinuationOptions {
        tau0: run.cfg.tau0,
        steps: run.cfg.steps,
        tol: run.cfg.tol,
        max_iter: run.cfg.max_iter,
        ..ContinuationOptions::default()
    };
    opts.positive.minimize = run.minimize();
    let trace = continuation(geom, &opts);
    let norms: Vec<f64> = trace.steps.iter().map(|s| s.norm_p).collect();
    let norms_r: Vec<f64> = trace.steps.iter().map(|s| s.norm_r).collect();
    let taus: Vec<f64> = trace.steps.iter().map(|s| s.tau).collect();
    if !trace.lambda_schedule.is_empty() {
        run.csv(
            "continuation.csv",
            &series_table(&[("tau", &trace.tau_schedule), ("tau_unit", &trace.tau_unit_schedule), ("lambda_tau", &trace.lambda_schedule)]),
        )?;
    }
    if !trace.steps.is_empty() {
        run.csv("continuation_steps.csv", &series_table(&[("tau", &taus), ("norm_p", &norms), ("norm_r", &norms_r)]))?;
    }
    if let Some(f) = &trace.failure {
        // constants at the first τ, so a failed run is still auditable
        let constants = trace.lambda_schedule.first().and_then(|&l| {
            let o = PositiveOptions { lambda_tau: Some(l), delta: trace.delta, ..opts.positive.clone() };
            positive_constants(geom, opts.tau0, &o).ok()
        });
        let report = json!({
            "constants": constants,
            "command": "solve",
            "config": run.cfg.echo,
            "case": "positive",
            "failure": f,
            "continuation": trace,
        });
        run.json("report.json", &report)?;
        return Err(CliError::Pipeline { stage: f.stage.clone(), message: format!("step {} (tau = {}): {}", f.step, f.tau, f.message) });
    }
    let u = trace.limit.clone().expect("successful continuation has a limit");
    Ok(Solved {
        case: EigenClass::Positive,
        u,
        lambda: trace.lambda_limit.expect("limit"),
        zeta: trace.zeta.expect("zeta"),
        extra: json!({ "diagnostics": trace.diagnostics, "continuation": trace }),
    })
}

pub fn solve(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let geom = run.geometry()?;
    let case = match run.cfg.mode {
        CaseMode::Auto => classify(&run.cfg.geometry).map_err(|e| pipeline("classify", e))?.class,
        CaseMode::Zero => EigenClass::Zero,
        CaseMode::Negative => EigenClass::Negative,
        CaseMode::Positive => EigenClass::Positive,
    };
    println!("case = {case}");
    let solved = match case {
        EigenClass::Zero => solve_zero(&run, &geom)?,
        EigenClass::Negative => solve_negative_case(&run, &geom)?,
        EigenClass::Positive => solve_positive(&run, &geom)?,
    };
    let block = verify_field(&geom, &solved.u, solved.lambda, solved.zeta);
    println!("lambda = {:.12e}", solved.lambda);
    println!("zeta = {:.12e}", solved.zeta);
    print_verify(&block);
    let dev: Vec<f64> = block.r_tilde.iter().map(|r| r - solved.lambda).collect();
    run.csv("solution.csv", &nodal_table(&geom.nodes, &[("value", &solved.u)]))?;
    run.csv("curvature.csv", &nodal_table(&geom.nodes, &[("r_tilde", &block.r_tilde), ("deviation", &dev)]))?;
    let report = json!({
        "command": "solve",
        "config": run.cfg.echo,
        "case": solved.case,
        "solution": { "lambda": solved.lambda, "zeta": solved.zeta },
        "pipeline": solved.extra,
        "verification": block,
    });
    run.json("report.json", &report)?;
    if block.passed {
        Ok(())
    } else {
        Err(CliError::Verification(block.failures().join("; ")))
    }
}

/// λ and ζ for `verify`: flags, then [targets], then a report.json beside the CSV.
fn targets(run: &Run, c: &Common, solution: &Path, zeta: Option<f64>) -> Result<(f64, f64), CliError> {
    let sibling = || -> Option<Value> {
        let p = solution.parent()?.join("report.json");
        serde_json::from_str(&std::fs::read_to_string(p).ok()?).ok()
    };
    let report = sibling();
    let from_report = |key: &str| report.as_ref().and_then(|r| r["solution"][key].as_f64());
    let lambda = c.lambda.or(run.cfg.target_lambda).or_else(|| from_report("lambda"));
    let zeta = zeta.or(run.cfg.target_zeta).or_else(|| from_report("zeta"));
    match (lambda, zeta) {
        (Some(l), Some(z)) => Ok((l, z)),
        _ => Err(CliError::Config(
            "no target (lambda, zeta): pass --lambda/--zeta, set [targets], or keep report.json beside the solution".into(),
        )),
    }
}

pub fn verify(c: &Common, solution: &Path, zeta: Option<f64>) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let geom = run.geometry()?;
    let field = read_nodal(solution).map_err(CliError::Config)?;
    if field.r.len() != geom.num_nodes {
        return Err(CliError::Config(format!("solution has {} rows, geometry has {} nodes", field.r.len(), geom.num_nodes)));
    }
    let tol = 1e-12 * geom.r1;
    if let Some(i) = (0..field.r.len()).find(|&i| (field.r[i] - geom.nodes[i]).abs() > tol) {
        return Err(CliError::Config(format!("grid mismatch at node {i}: r = {} vs {}", field.r[i], geom.nodes[i])));
    }
    let (lambda, zeta) = targets(&run, c, solution, zeta)?;
    let block = verify_field(&geom, &field.value, lambda, zeta);
    print_verify(&block);
    run.json(
        "verify.json",
        &json!({ "command": "verify", "config": run.cfg.echo, "solution": solution.display().to_string(), "verification": block }),
    )?;
    if block.passed {
        Ok(())
    } else {
        Err(CliError::Verification(block.failures().join("; ")))
    }
}

const ORACLE_MAX_NODES: usize = 12;
const ORACLE_INSTANCES: usize = 100;

pub fn oracle(c: &Common) -> Result<(), CliError> {
    let run = Run::load(c)?;
    let nodes = run.cfg.geometry.num_nodes;
    if nodes > ORACLE_MAX_NODES {
        return Err(CliError::Config(format!("oracle refuses {nodes} nodes; dense oracles run on at most {ORACLE_MAX_NODES}")));
    }
    let geom = run.geometry()?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.cfg.seed);
    let (mut lin_dev, mut eig_dev) = (0.0f64, 0.0f64);
    for _ in 0..ORACLE_INSTANCES {
        let c0: Vec<f64> = geom.scalar.iter().map(|r| r + rng.gen_range(-2.0..2.0)).collect();
        let robin = (rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0));
        let sys = assemble(&geom, &c0, robin).map_err(|e| pipeline("assemble", e))?;
        let shifted: Vec<f64> = c0.iter().map(|x| x.abs() + rng.gen_range(0.1..3.0)).collect();
        let pos = assemble(&geom, &shifted, (robin.0.abs(), robin.1.abs())).map_err(|e| pipeline("assemble", e))?;
        let rhs: Vec<f64> = (0..nodes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let strong = pos.strong();
        let xb = solve_banded(&strong, &rhs).map_err(|e| pipeline("banded", e))?;
        let xd = solve_dense(&strong.to_dense(), &rhs).map_err(|e| pipeline("dense", e))?;
        let scale = xd.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        lin_dev = lin_dev.max(xb.iter().zip(&xd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale);
        let (eta, _) = smallest_eig_generalized(&sys.form, &sys.mass).map_err(|e| pipeline("eigen", e))?;
        let eta_o = bisection_smallest_eig(&sys.form.to_dense(), &sys.mass).map_err(|e| pipeline("bisection", e))?;
        eig_dev = eig_dev.max((eta - eta_o).abs() / eta_o.abs().max(1.0));
    }
    let (eta1, _) = first_eigen(&geom).map_err(|e| pipeline("eigen", e))?;
    let sys = box_system(&geom, 0.0).map_err(|e| pipeline("operator", e))?;
    let eta_o = bisection_smallest_eig(&sys.form.to_dense(), &sys.mass).map_err(|e| pipeline("bisection", e))?;
    let geom_dev = (eta1 - eta_o).abs() / eta_o.abs().max(1.0);
    let lin_ok = lin_dev <= 1e-10;
    let eig_ok = eig_dev.max(geom_dev) <= 1e-8;
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    println!("{} banded vs dense solve: max deviation {:.3e} over {ORACLE_INSTANCES} instances (tol 1e-10)", mark(lin_ok), lin_dev);
    println!("{} eigen vs bisection: max deviation {:.3e} over {ORACLE_INSTANCES} instances (tol 1e-8)", mark(eig_dev <= 1e-8), eig_dev);
    println!("{} eta1 of the configured geometry: {:.12e} vs {:.12e}", mark(geom_dev <= 1e-8), eta1, eta_o);
    run.json(
        "oracle.json",
        &json!({
            "command": "oracle",
            "config": run.cfg.echo,
            "instances": ORACLE_INSTANCES,
            "linear_max_deviation": lin_dev,
            "eigen_max_deviation": eig_dev,
            "geometry_eta1": eta1,
            "geometry_eta1_oracle": eta_o,
            "passed": lin_ok && eig_ok,
        }),
    )?;
    if lin_ok && eig_ok {
        Ok(())
    } else {
        Err(CliError::Verification(format!("oracle deviations: linear {lin_dev:e}, eigen {:e}", eig_dev.max(geom_dev))))
    }
}
