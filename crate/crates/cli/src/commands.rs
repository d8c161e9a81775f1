use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use kolmogorov::bench::{fit_slopes, run_bench};
use kolmogorov::dynamics::run_evolution;
use kolmogorov::gradient::{build_triple_tensor, spectral_gradient};
use kolmogorov::operator::operator_bandwidths;
use kolmogorov::pipeline::{run_density, run_operator, DensityStage, PipelineConfig};
use kolmogorov::sampling;
use kolmogorov::solver::{residual_norm, solve_kolmogorov, SpectralSolution};
use kolmogorov::spectra::{leading_eigs, EigenBasis};
use kolmogorov::tuning::{tune_bandwidth, TuningConfig, TuningResult};
use kolmogorov::PointCloud;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{GradientTarget, RunConfig, ScalarField};
use crate::io::{coord_names, ensure_dir, io_err, num, read_samples, sample_prefix, write_json, Table};
use crate::{CliError, Common};

pub struct Ctx {
    command: &'static str,
    cfg: RunConfig,
    out: PathBuf,
    samples: Option<PathBuf>,
    cloud: Option<PointCloud>,
    timings: BTreeMap<String, f64>,
    outputs: Vec<String>,
    summary: serde_json::Map<String, Value>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    threads: usize,
    samples: Option<String>,
    n: Option<usize>,
    dim: Option<usize>,
    config: &'a RunConfig,
    outputs: &'a [String],
    summary: &'a serde_json::Map<String, Value>,
    timings: &'a BTreeMap<String, f64>,
}

impl Ctx {
    pub fn new(command: &'static str, common: &Common) -> Result<Self, CliError> {
        let mut cfg = RunConfig::load(common.config.as_deref())?;
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        let out = ensure_dir(&common.out)?;
        Ok(Self {
            command,
            cfg,
            out,
            samples: common.samples.clone(),
            cloud: None,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
            summary: serde_json::Map::new(),
        })
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let v = f();
        self.timings.insert(stage.to_string(), t0.elapsed().as_secs_f64());
        v
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn write_table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        let p = self.path(name);
        table.write(&p)
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// The input samples, read from `--samples` or drawn and written out.
    fn cloud(&mut self) -> Result<PointCloud, CliError> {
        if let Some(c) = &self.cloud {
            return Ok(c.clone());
        }
        let cloud = match self.samples.clone() {
            Some(p) => read_samples(&p, self.cfg.data.header)?,
            None => {
                let c = sampling::sample(&self.cfg.data.distribution, self.cfg.data.n, self.cfg.seed)?;
                write_samples(self, &c)?;
                c
            }
        };
        self.cloud = Some(cloud.clone());
        Ok(cloud)
    }

    fn pipeline(&self) -> PipelineConfig {
        self.cfg.pipeline()
    }

    fn density_stage(&mut self, cloud: &PointCloud) -> Result<DensityStage, CliError> {
        let pc = self.pipeline();
        let stage = self.timed("density", || run_density(cloud, &pc))?;
        self.note("density_eps", stage.density.eps);
        self.note("density_dim", stage.density.dim);
        if let Some(t) = &stage.tuning {
            self.note("density_dim_estimate", t.dim_estimate);
        }
        Ok(stage)
    }

    fn basis(&mut self, cloud: &PointCloud) -> Result<(kolmogorov::operator::KolmogorovOperator, EigenBasis), CliError> {
        let pc = self.pipeline();
        let stage = self.density_stage(cloud)?;
        let op = self.timed("operator", || run_operator(cloud, &stage, &pc))?;
        self.note("operator_eps", op.op.eps);
        self.note("alpha", op.op.alpha);
        if let Some(t) = &op.tuning {
            self.note("operator_dim_estimate", t.dim_estimate);
        }
        let basis = self.timed("eigs", || leading_eigs(&op.op, &pc.spectra))?;
        self.note("ell", basis.ell);
        self.note("matvecs", basis.matvecs);
        Ok((op.op, basis))
    }

    fn solve(
        &mut self,
        cloud: &PointCloud,
        op: &kolmogorov::operator::KolmogorovOperator,
        basis: &EigenBasis,
    ) -> Result<(Vec<f64>, SpectralSolution), CliError> {
        let g = self.cfg.solver.g.evaluate(cloud)?;
        let sol = self.timed("solve", || solve_kolmogorov(basis, &g))?;
        self.note("residual_s_norm", residual_norm(op, &sol.f, &g)?);
        Ok((g, sol))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        write_json(&self.out.join("resolved_config.json"), &self.cfg)?;
        self.outputs.push("resolved_config.json".into());
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.cfg.seed,
            threads: rayon::current_num_threads(),
            samples: self.samples.as_ref().map(|p| p.display().to_string()),
            n: self.cloud.as_ref().map(PointCloud::len),
            dim: self.cloud.as_ref().map(PointCloud::dim),
            config: &self.cfg,
            outputs: &self.outputs,
            summary: &self.summary,
            timings: &self.timings,
        };
        write_json(&self.out.join("manifest.json"), &manifest)?;
        eprintln!("{}: wrote {} files to {}", self.command, self.outputs.len() + 1, self.out.display());
        Ok(())
    }
}

fn write_samples(ctx: &mut Ctx, cloud: &PointCloud) -> Result<(), CliError> {
    let mut t = Table::new(coord_names(cloud.dim()));
    for p in cloud.points() {
        t.push(p.iter().map(|v| num(*v)).collect());
    }
    ctx.write_table("samples.csv", &t)
}

fn tuning_table(res: &TuningResult) -> Table {
    let mut t = Table::new(["xi", "eps", "chi", "chi_prime"]);
    for s in &res.curve {
        t.push(vec![num(s.xi), num(s.eps), num(s.chi), num(s.chi_prime)]);
    }
    t
}

fn note_tuning(ctx: &mut Ctx, prefix: &str, res: &TuningResult) {
    ctx.note(
        &format!("{prefix}_tuning"),
        json!({
            "eps": res.eps,
            "xi": res.xi,
            "chi_prime_max": res.chi_prime_max,
            "dim_estimate": res.dim_estimate,
        }),
    );
}

pub fn tune(ctx: &mut Ctx) -> Result<(), CliError> {
    let cloud = ctx.cloud()?;
    let pc = ctx.pipeline();
    let stage = ctx.density_stage(&cloud)?;
    if let Some(t) = &stage.tuning {
        ctx.write_table("tuning_density.csv", &tuning_table(t))?;
        note_tuning(ctx, "density", t);
    }
    if pc.operator.eps.is_none() {
        let rho = operator_bandwidths(&stage.density.psi, pc.operator.beta)?;
        let tcfg = TuningConfig {
            delta_tol: pc.delta_tol,
            ..pc.tuning
        };
        let res = ctx.timed("operator_tuning", || tune_bandwidth(&cloud, &stage.seq, &rho, &tcfg))?;
        ctx.write_table("tuning_operator.csv", &tuning_table(&res))?;
        note_tuning(ctx, "operator", &res);
    }
    Ok(())
}

pub fn density(ctx: &mut Ctx) -> Result<(), CliError> {
    let cloud = ctx.cloud()?;
    let stage = ctx.density_stage(&cloud)?;
    let mut header = vec!["index".to_string()];
    header.extend(coord_names(cloud.dim()));
    header.push("psi_hat".into());
    let mut t = Table::new(header);
    for (i, psi) in stage.density.psi.iter().enumerate() {
        let mut row = sample_prefix(&cloud, i);
        row.push(num(*psi));
        t.push(row);
    }
    ctx.write_table("density.csv", &t)?;
    if let Some(res) = &stage.tuning {
        ctx.write_table("tuning_density.csv", &tuning_table(res))?;
    }
    Ok(())
}

pub fn eigs(ctx: &mut Ctx) -> Result<(), CliError> {
    let cloud = ctx.cloud()?;
    let (op, basis) = ctx.basis(&cloud)?;
    let mut vals = Table::new(["j", "lambda"]);
    for (j, l) in basis.lambda.iter().enumerate() {
        vals.push(vec![j.to_string(), num(*l)]);
    }
    ctx.write_table("eigenvalues.csv", &vals)?;
    let mut vecs = Table::new((0..=basis.ell).map(|j| format!("phi{j}")));
    for i in 0..basis.n() {
        vecs.push(basis.phi.iter().map(|p| num(p[i])).collect());
    }
    ctx.write_table("eigenvectors.csv", &vecs)?;
    if ctx.cfg.operator.export_matrix {
        let p = ctx.path("kernel.mtx");
        let file = File::create(&p).map_err(|e| io_err(&p, e))?;
        op.kba.write_matrix_market(BufWriter::new(file)).map_err(|e| io_err(&p, e))?;
        let mut diag = Table::new(["index", "p", "d", "s"]);
        for i in 0..op.len() {
            diag.push(vec![i.to_string(), num(op.p[i]), num(op.d[i]), num(op.s[i])]);
        }
        ctx.write_table("diagonals.csv", &diag)?;
    }
    Ok(())
}

pub fn solve(ctx: &mut Ctx) -> Result<(), CliError> {
    let cloud = ctx.cloud()?;
    let (op, basis) = ctx.basis(&cloud)?;
    let (g, sol) = ctx.solve(&cloud, &op, &basis)?;
    let mut header = vec!["index".to_string()];
    header.extend(coord_names(cloud.dim()));
    header.extend(["g".to_string(), "f".to_string()]);
    let mut t = Table::new(header);
    for (i, (gi, fi)) in g.iter().zip(&sol.f).enumerate() {
        let mut row = sample_prefix(&cloud, i);
        row.extend([num(*gi), num(*fi)]);
        t.push(row);
    }
    ctx.write_table("solution.csv", &t)?;
    let mut c = Table::new(["j", "lambda", "g_tilde", "f_tilde"]);
    for j in 1..=basis.ell {
        c.push(vec![
            j.to_string(),
            num(basis.lambda[j]),
            num(sol.g_coeff[j - 1]),
            num(sol.f_coeff[j - 1]),
        ]);
    }
    ctx.write_table("coefficients.csv", &c)
}

pub fn gradient(ctx: &mut Ctx) -> Result<(), CliError> {
    let cloud = ctx.cloud()?;
    let (op, basis) = ctx.basis(&cloud)?;
    let (u, coeffs) = match ctx.cfg.gradient.target.clone() {
        GradientTarget::Solution => {
            let (_, sol) = ctx.solve(&cloud, &op, &basis)?;
            let c = sol.full_coeffs();
            (sol.f, c)
        }
        other => {
            let field = match other {
                GradientTarget::Coordinate { axis } => ScalarField::Coordinate { axis },
                GradientTarget::Linear { r } => ScalarField::Linear { r },
                GradientTarget::CenteredLinear { r } => ScalarField::CenteredLinear { r },
                GradientTarget::Solution => unreachable!("handled above"),
            };
            let u = field.evaluate(&cloud)?;
            let c = basis.project(&u)?;
            (u, c)
        }
    };
    let cap = ctx.cfg.gradient.tensor_cap;
    let tensor = ctx.timed("tensor", || build_triple_tensor(&basis, cap))?;
    let grad = ctx.timed("gradient", || spectral_gradient(&basis, &tensor, &coeffs, &cloud))?;
    let m = cloud.dim();
    let mut header = vec!["index".to_string()];
    header.extend(coord_names(m));
    header.push("u".into());
    header.extend((1..=m).map(|s| format!("du_dx{s}")));
    let mut t = Table::new(header);
    for (i, ui) in u.iter().enumerate() {
        let mut row = sample_prefix(&cloud, i);
        row.push(num(*ui));
        row.extend(grad.at(i).iter().map(|v| num(*v)));
        t.push(row);
    }
    ctx.write_table("gradient.csv", &t)
}

pub fn evolve(ctx: &mut Ctx) -> Result<(), CliError> {
    let cloud = ctx.cloud()?;
    let ecfg = ctx.cfg.evolution();
    let every = ctx.cfg.dynamics.snapshot_every.max(1);
    let m = cloud.dim();
    let snap_dir = ensure_dir(&ctx.out.join("snapshots"))?;
    let mut snapshots: Vec<String> = Vec::new();
    let mut traj = Table::new(
        ["step", "time", "mass", "n"]
            .into_iter()
            .map(String::from)
            .chain((1..=m).map(|s| format!("mean_x{s}"))),
    );
    let last = ecfg.steps;
    let t0 = Instant::now();
    run_evolution(&ecfg, cloud, |snap| {
        let mean = snap.cloud.mean();
        let mut row = vec![
            snap.step.to_string(),
            num(snap.time),
            num(snap.mass),
            snap.cloud.len().to_string(),
        ];
        row.extend(mean.iter().map(|v| num(*v)));
        traj.push(row);
        if snap.step % every != 0 && snap.step != last {
            return Ok(());
        }
        let mut header = vec!["time".to_string(), "index".to_string()];
        header.extend(coord_names(m));
        header.push("f".into());
        header.extend((1..=m).map(|s| format!("u{s}")));
        header.push("mass".into());
        let mut t = Table::new(header);
        for i in 0..snap.cloud.len() {
            let mut row = vec![num(snap.time)];
            row.extend(sample_prefix(snap.cloud, i));
            row.push(snap.f.map_or(String::new(), |f| num(f[i])));
            for s in 0..m {
                row.push(snap.u_prime.map_or(String::new(), |u| num(u[i * m + s])));
            }
            row.push(num(snap.mass));
            t.push(row);
        }
        let name = format!("step_{:06}.csv", snap.step);
        t.write(&snap_dir.join(&name))
            .map_err(|e| kolmogorov::Error::Structural(e.to_string()))?;
        snapshots.push(format!("snapshots/{name}"));
        Ok(())
    })?;
    ctx.timings.insert("evolve".into(), t0.elapsed().as_secs_f64());
    ctx.outputs.extend(snapshots);
    ctx.write_table("trajectory.csv", &traj)
}

pub fn bench(ctx: &mut Ctx) -> Result<(), CliError> {
    let bcfg = ctx.cfg.bench();
    let recs = ctx.timed("bench", || {
        run_bench(&bcfg, |r| {
            eprintln!(
                "n = {:>7} {:<14} t = {:>5}: {:.4}s ({} nonzeros)",
                r.n, r.method, r.tree_count, r.total_seconds, r.nnz
            )
        })
    })?;
    let mut t = Table::new([
        "n",
        "method",
        "tree_count",
        "build_seconds",
        "assemble_seconds",
        "total_seconds",
        "nnz",
    ]);
    for r in &recs {
        t.push(vec![
            r.n.to_string(),
            r.method.clone(),
            r.tree_count.to_string(),
            num(r.build_seconds),
            num(r.assemble_seconds),
            num(r.total_seconds),
            r.nnz.to_string(),
        ]);
    }
    ctx.write_table("bench.csv", &t)?;
    let slopes: BTreeMap<String, f64> = fit_slopes(&recs).into_iter().collect();
    ctx.note("loglog_slopes", slopes);
    Ok(())
}

pub fn sample(ctx: &mut Ctx) -> Result<(), CliError> {
    if ctx.samples.is_some() {
        return Err(CliError::Validation("sample draws from the configured distribution; drop --samples".into()));
    }
    ctx.cloud()?;
    Ok(())
}
