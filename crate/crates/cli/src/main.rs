mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use config::{monotone, parse_root, ConfigError, Section};
use tube_spectra::decay::{compute_tail_profile, decay_grid, paper_decay_constants, verify_decay_bounds};
use tube_spectra::geometry::{
    build_broken_strip, build_diamond, build_hersch_pipe, build_infinite_cross, build_polygon, build_slit_disk,
    compute_r0, inradius_of_spec, threshold_energy, DomainSpec, Point2,
};
use tube_spectra::mesh::MeshOptions;
use tube_spectra::perturb::{compute_f_profile, eigen_drop_study, profile_samples, rho_verdict, PerturbOptions};
use tube_spectra::spectra::{exhaustion_study, solve_eigs_with, ExhaustionOptions, SolveOptions};
use tube_spectra::torsion::{blow_up_constant, blowup_csv, epsilon_scaling_study, torsion_csv, BlowupOptions};
use tube_spectra::weyl::{essential_threshold_report, weyl_csv};

#[derive(Parser)]
#[command(name = "tube-spectra", version, about = "Dirichlet eigenvalue studies on core-plus-tubes domains")]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<String>,
    /// hersch, square, diamond, slit_disk, cross or broken_strip.
    #[arg(long, global = true)]
    domain: Option<String>,
    /// Domain description in JSON, instead of a named domain.
    #[arg(long = "domain-file", global = true)]
    domain_file: Option<String>,
    #[arg(long = "circle-segments", global = true)]
    circle_segments: Option<u64>,
    /// Arm angle of the broken strip.
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lowest eigenvalues on one truncation.
    Eig(EigArgs),
    /// Eigenvalues over a schedule of truncations.
    Exhaust(ExhaustArgs),
    /// Tail decay of the first eigenfunction against the explicit bound.
    Decay(DecayArgs),
    /// Singular Weyl sequences along a tube.
    Weyl(WeylArgs),
    /// Thin torsional rigidity of one tube of shrinking width.
    Torsion(TorsionArgs),
    /// Blow-up torsion constant.
    Blowup(BlowupArgs),
    /// Eigenvalue drop and inradius ratio under attachment of thin tubes.
    Perturb(PerturbArgs),
    /// Inradius of the domain.
    Inradius(InradiusArgs),
    /// SVG plot of a study CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct EigArgs {
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ExhaustArgs {
    #[arg(long = "R", value_delimiter = ',')]
    r: Option<Vec<f64>>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Solve each truncation on its own mesh instead of submeshes of the largest.
    #[arg(long = "no-submesh")]
    no_submesh: bool,
}

#[derive(Args)]
struct DecayArgs {
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct WeylArgs {
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    tube: Option<u64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long = "h-tube")]
    h_tube: Option<f64>,
    #[arg(long = "h-far")]
    h_far: Option<f64>,
}

#[derive(Args)]
struct TorsionArgs {
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Abscissa of the tube on the upper wall.
    #[arg(long)]
    p: Option<f64>,
    /// Constant load f.
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long = "tube-factor")]
    tube_factor: Option<f64>,
}

#[derive(Args)]
struct BlowupArgs {
    #[arg(long = "R-inf", value_delimiter = ',')]
    r_inf: Option<Vec<f64>>,
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<f64>>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "h-sigma")]
    h_sigma: Option<f64>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Blow-up constant; computed with the `blowup` settings when absent.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long = "tube-factor")]
    tube_factor: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct InradiusArgs {
    #[arg(long = "grid-h")]
    grid_h: Option<f64>,
    #[arg(long)]
    refine: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    /// Study CSV to plot.
    csv: PathBuf,
    /// Expected schema (eig, exhaust, decay, weyl, torsion, blowup, perturb).
    #[arg(long)]
    kind: Option<String>,
    #[arg(long = "log-y")]
    log_y: bool,
    /// Output file (default: the CSV path with extension .svg).
    #[arg(long = "svg")]
    svg: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<tube_spectra::Error> for Failure {
    fn from(e: tube_spectra::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type Run<T> = Result<T, Failure>;

fn num<T: Into<Value>>(v: Option<T>) -> Option<Value> {
    v.map(Into::into)
}

fn list<T: Into<Value>>(v: Option<Vec<T>>) -> Option<Value> {
    v.map(|x| Value::Array(x.into_iter().map(Into::into).collect()))
}

struct Context {
    root: Map<String, Value>,
    out: PathBuf,
    seed: u64,
    spec: Option<DomainSpec>,
}

impl Context {
    fn section(&self, name: &str) -> Section {
        let map = self.root.get(name).and_then(Value::as_object).cloned().unwrap_or_default();
        Section::new(name, map)
    }

    fn spec(&self) -> &DomainSpec {
        self.spec.as_ref().expect("domain resolved")
    }

    fn write(&self, name: &str, content: &str) -> Run<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Failure::Run(format!("{}: {e}", self.out.display())))?;
        let p = self.out.join(name);
        std::fs::write(&p, content).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?;
        Ok(p)
    }
}

fn resolve_domain(g: &mut Section) -> Run<DomainSpec> {
    if let Some(path) = g.string("domain_file")? {
        let text = std::fs::read_to_string(&path).map_err(|e| Failure::Config(format!("config key `domain_file`: {path}: {e}")))?;
        return Ok(DomainSpec::from_json(&text)?);
    }
    let name = g.string("domain")?.unwrap_or_else(|| "hersch".into());
    let segs = g.usize("circle_segments", 64)?;
    let theta = g.f64("theta", std::f64::consts::FRAC_PI_4)?;
    let p = Point2::new;
    Ok(match name.as_str() {
        "hersch" => build_hersch_pipe(segs)?,
        "square" => build_polygon("square", vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)])?,
        "diamond" => build_diamond(),
        "slit_disk" => build_slit_disk(segs)?,
        "cross" => build_infinite_cross(),
        "broken_strip" => build_broken_strip(theta)?,
        other => return Err(Failure::Config(format!("config key `domain`: unknown domain `{other}`"))),
    })
}

fn default_r(spec: &DomainSpec) -> f64 {
    if spec.infinite_tubes().next().is_some() {
        8.0
    } else {
        0.0
    }
}

fn eig(ctx: &Context, a: EigArgs) -> Run<()> {
    let mut s = ctx.section("eig");
    s.set("R", num(a.r));
    s.set("h", num(a.h));
    s.set("k", num(a.k));
    s.set("tol", num(a.tol));
    let spec = ctx.spec();
    let r = s.f64("R", default_r(spec))?;
    let h = s.positive("h", 0.05)?;
    let k = s.usize("k", 3)?.max(1);
    let tol = s.positive("tol", 1e-9)?;
    s.finish()?;
    let sol = solve_eigs_with(spec, r, &MeshOptions::new(h), &SolveOptions { seed: ctx.seed, ..SolveOptions::new(k, tol) })?;
    let mut csv = String::from("domain,R,h,j,lambda,residual\n");
    for (j, (l, res)) in sol.eigenvalues.iter().zip(&sol.residuals).enumerate() {
        csv += &format!("{},{r},{h},{},{l:.12e},{res:.3e}\n", spec.name, j + 1);
    }
    let p = ctx.write("eig.csv", &csv)?;
    println!("{} eigenvalues on {} (R = {r}, {} vertices): {:?}", k, spec.name, sol.provenance.vertices, sol.eigenvalues);
    println!("wrote {}", p.display());
    Ok(())
}

fn exhaust(ctx: &Context, a: ExhaustArgs) -> Run<()> {
    let mut s = ctx.section("exhaust");
    s.set("R", list(a.r));
    s.set("h", num(a.h));
    s.set("k", num(a.k));
    s.set("tol", num(a.tol));
    if a.no_submesh {
        s.set("submesh", Some(Value::Bool(false)));
    }
    let r = s.f64_list("R", &[4.0, 6.0, 8.0, 10.0])?;
    monotone("exhaust.R", &r, true)?;
    let opts = ExhaustionOptions {
        h: s.positive("h", 0.05)?,
        k: s.usize("k", 1)?.max(1),
        tol: s.positive("tol", 1e-9)?,
        seed: ctx.seed,
        submesh: s.bool("submesh", true)?,
        ..ExhaustionOptions::new(r, 0.05, 1)
    };
    s.finish()?;
    let st = exhaustion_study(ctx.spec(), &opts)?;
    for w in &st.warnings {
        eprintln!("warning: {w}");
    }
    ctx.write("exhaust.json", &st.to_json())?;
    let p = ctx.write("exhaust.csv", &st.to_csv())?;
    println!("extrapolated eigenvalues {:?}, threshold {}", (0..opts.k).map(|j| st.limit(j)).collect::<Vec<_>>(), st.threshold);
    println!("wrote {}", p.display());
    Ok(())
}

fn decay(ctx: &Context, a: DecayArgs) -> Run<()> {
    let mut s = ctx.section("decay");
    s.set("R", num(a.r));
    s.set("h", num(a.h));
    s.set("step", num(a.step));
    s.set("tol", num(a.tol));
    let r = s.positive("R", 12.0)?;
    let h = s.positive("h", 0.05)?;
    let step = s.positive("step", 0.5)?;
    let tol = s.positive("tol", 1e-9)?;
    s.finish()?;
    let spec = ctx.spec();
    let sol = solve_eigs_with(spec, r, &MeshOptions::new(h), &SolveOptions { seed: ctx.seed, ..SolveOptions::new(1, tol) })?;
    let r0 = compute_r0(spec)?;
    let u = sol.function(0);
    let prof = compute_tail_profile(&u, spec, &decay_grid(r, step), r0, r)?;
    let c = paper_decay_constants(threshold_energy(spec)?, sol.eigenvalues[0], r0)?;
    let check = verify_decay_bounds(&prof, &c, prof.norm);
    let p = ctx.write("decay.csv", &check.to_csv())?;
    println!(
        "lambda_1 = {:.8}, C = {:.4}, beta = {:.6}, C1 = {:.4}, measured rate {:.4}, bound {}",
        sol.eigenvalues[0],
        c.c_omega,
        c.beta,
        c.c1,
        prof.rate,
        if check.pass { "holds" } else { "VIOLATED" }
    );
    println!("wrote {}", p.display());
    Ok(())
}

fn weyl(ctx: &Context, a: WeylArgs) -> Run<()> {
    let mut s = ctx.section("weyl");
    s.set("lambda", list(a.lambda));
    s.set("n", list(a.n));
    s.set("tube", num(a.tube));
    s.set("r0", num(a.r0));
    s.set("h_tube", num(a.h_tube));
    s.set("h_far", num(a.h_far));
    let lambdas = s.f64_list("lambda", &[std::f64::consts::PI.powi(2)])?;
    let ns = s.usize_list("n", &[1, 2, 4, 8])?;
    let tube = s.usize("tube", 0)?;
    let r0 = s.f64("r0", 2.0)?;
    let h_tube = s.positive("h_tube", 1.0 / 32.0)?;
    let h_far = s.positive("h_far", 0.25)?;
    s.finish()?;
    if ns.contains(&0) {
        return Err(Failure::Config("config key `weyl.n`: indices must be at least 1".into()));
    }
    let rows = essential_threshold_report(ctx.spec(), tube, r0, &lambdas, &ns, h_tube, h_far)?;
    for r in rows.iter().filter(|r| !r.applicable) {
        eprintln!("warning: lambda = {} is below the essential threshold; row skipped", r.lambda);
    }
    let p = ctx.write("weyl.csv", &weyl_csv(&rows))?;
    println!("wrote {}", p.display());
    Ok(())
}

fn torsion(ctx: &Context, a: TorsionArgs) -> Run<()> {
    let mut s = ctx.section("torsion");
    s.set("eps", list(a.eps));
    s.set("p", num(a.p));
    s.set("f", num(a.f));
    s.set("h", num(a.h));
    s.set("R", num(a.r));
    s.set("tube_factor", num(a.tube_factor));
    let eps = s.f64_list("eps", &[0.05, 0.025, 0.0125])?;
    monotone("torsion.eps", &eps, false)?;
    let px = s.f64("p", 2.5)?;
    let f = s.f64("f", 1.0)?;
    let h = s.positive("h", 0.1)?;
    let r = s.positive("R", 5.0)?;
    let factor = s.positive("tube_factor", 0.25)?;
    s.finish()?;
    let rows = epsilon_scaling_study(ctx.spec(), px, &move |_| f, &eps, h, r, factor)?;
    let p = ctx.write("torsion.csv", &torsion_csv(&rows, r))?;
    for row in &rows {
        println!("eps = {}: T = {:.6e}, T/eps^2 = {:.5}, gamma = {:.4e}", row.eps, row.t, row.t_over_eps2, row.gamma);
    }
    println!("wrote {}", p.display());
    Ok(())
}

fn blowup_options(ctx: &Context, a: Option<BlowupArgs>) -> Run<BlowupOptions> {
    let mut s = ctx.section("blowup");
    if let Some(a) = a {
        s.set("R_inf", list(a.r_inf));
        s.set("L", list(a.l));
        s.set("h", num(a.h));
        s.set("h_sigma", num(a.h_sigma));
    }
    let d = BlowupOptions::default();
    let opts = BlowupOptions {
        r_inf: s.f64_list("R_inf", &d.r_inf)?,
        tube_len: s.f64_list("L", &d.tube_len)?,
        h: s.positive("h", d.h)?,
        h_sigma: s.positive("h_sigma", d.h_sigma)?,
        arc_segments: s.usize("arc_segments", d.arc_segments)?,
    };
    s.finish()?;
    monotone("blowup.R_inf", &opts.r_inf, true)?;
    monotone("blowup.L", &opts.tube_len, true)?;
    Ok(opts)
}

fn blowup(ctx: &Context, a: BlowupArgs) -> Run<()> {
    let st = blow_up_constant(&blowup_options(ctx, Some(a))?)?;
    let p = ctx.write("blowup.csv", &blowup_csv(&st))?;
    println!("alpha = {:.6} (coarse extrapolation {:.6})", st.alpha, st.alpha_coarse);
    println!("wrote {}", p.display());
    Ok(())
}

fn perturb(ctx: &Context, a: PerturbArgs) -> Run<()> {
    let mut s = ctx.section("perturb");
    s.set("n", list(a.n));
    s.set("eps", list(a.eps));
    s.set("alpha", num(a.alpha));
    s.set("h", num(a.h));
    s.set("R", num(a.r));
    s.set("tube_factor", num(a.tube_factor));
    s.set("tol", num(a.tol));
    let d = PerturbOptions::default();
    let ns = s.usize_list("n", &[1, 2, 4, 9])?;
    let eps = s.f64_list("eps", &[0.05, 0.025, 0.0125])?;
    monotone("perturb.eps", &eps, false)?;
    let alpha = match s.f64("alpha", f64::NAN)? {
        v if v.is_nan() => None,
        v if v > 0.0 => Some(v),
        v => return Err(Failure::Config(format!("config key `perturb.alpha`: must be positive, got {v}"))),
    };
    let opts = PerturbOptions {
        r: s.positive("R", d.r)?,
        h: s.positive("h", d.h)?,
        tube_factor: s.positive("tube_factor", d.tube_factor)?,
        tol: s.positive("tol", d.tol)?,
        seed: ctx.seed,
        inradius_grid: s.positive("inradius_grid", d.inradius_grid)?,
    };
    s.finish()?;
    let alpha = match alpha {
        Some(v) => v,
        None => blow_up_constant(&blowup_options(ctx, None)?)?.alpha,
    };
    let spec = ctx.spec();
    let profile = compute_f_profile(spec, opts.r, opts.h, &profile_samples(1.0, 4.0, 61), &opts)?;
    let r_h = inradius_of_spec(spec, opts.inradius_grid, 40)?.radius;
    let rows = eigen_drop_study(spec, &ns, &eps, &profile, &opts)?;
    let rep = rho_verdict(&profile, alpha, r_h, rows)?;
    ctx.write("perturb.json", &rep.to_json())?;
    let p = ctx.write("perturb.csv", &rep.to_csv())?;
    println!("alpha = {alpha:.6}, n0 = {}, verdict: {}", rep.n0, rep.verdict.as_str());
    for d in &rep.diagnostics {
        println!("  {d}");
    }
    println!("wrote {}", p.display());
    Ok(())
}

fn inradius(ctx: &Context, a: InradiusArgs) -> Run<()> {
    let mut s = ctx.section("inradius");
    s.set("grid_h", num(a.grid_h));
    s.set("refine", num(a.refine));
    let g = s.positive("grid_h", 0.01)?;
    let refine = s.usize("refine", 40)?;
    s.finish()?;
    let ir = inradius_of_spec(ctx.spec(), g, refine)?;
    let p = ctx.write("inradius.csv", &format!("domain,radius,cx,cy\n{},{:.12e},{:.12e},{:.12e}\n", ctx.spec().name, ir.radius, ir.center.x, ir.center.y))?;
    println!("inradius {:.10} at ({:.6}, {:.6})", ir.radius, ir.center.x, ir.center.y);
    println!("wrote {}", p.display());
    Ok(())
}

fn plot(a: PlotArgs) -> Run<()> {
    let kind = match a.kind.as_deref() {
        None => None,
        Some(k) => Some(plot::Kind::parse(k).ok_or_else(|| Failure::Config(format!("unknown plot kind `{k}`")))?),
    };
    let text = std::fs::read_to_string(&a.csv).map_err(|e| Failure::Run(format!("{}: {e}", a.csv.display())))?;
    let svg = plot::plot_csv(&text, kind, a.log_y).map_err(|e| Failure::Run(format!("{}: {e}", a.csv.display())))?;
    let out = a.svg.unwrap_or_else(|| a.csv.with_extension("svg"));
    std::fs::write(&out, svg).map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Run<()> {
    if let Cmd::Plot(a) = cli.cmd {
        return plot(a);
    }
    let root = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            parse_root(&text)?
        }
        None => Map::new(),
    };
    let mut g = Section::new("", root.clone());
    g.set("domain", cli.domain.map(Value::from));
    g.set("domain_file", cli.domain_file.map(Value::from));
    g.set("circle_segments", num(cli.circle_segments));
    g.set("theta", num(cli.theta));
    g.set("out", cli.out.map(Value::from));
    g.set("seed", num(cli.seed));
    let needs_domain = !matches!(cli.cmd, Cmd::Blowup(_));
    let spec = if needs_domain { Some(resolve_domain(&mut g)?) } else { None };
    let out = PathBuf::from(g.string("out")?.unwrap_or_else(|| "out".into()));
    let seed = g.usize("seed", 0)? as u64;
    let ctx = Context { root, out, seed, spec };
    match cli.cmd {
        Cmd::Eig(a) => eig(&ctx, a),
        Cmd::Exhaust(a) => exhaust(&ctx, a),
        Cmd::Decay(a) => decay(&ctx, a),
        Cmd::Weyl(a) => weyl(&ctx, a),
        Cmd::Torsion(a) => torsion(&ctx, a),
        Cmd::Blowup(a) => blowup(&ctx, a),
        Cmd::Perturb(a) => perturb(&ctx, a),
        Cmd::Inradius(a) => inradius(&ctx, a),
        Cmd::Plot(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

