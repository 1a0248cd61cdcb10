use std::fs;

use ising_bell::chsh::{pairwise_correlations, DEFAULT_CORRELATION_THRESHOLD, SETTING_PAIRS};
use ising_bell::diagnostics::{diagnose, sweep_subsets, Witness};
use ising_bell::geometry::geometry_family;
use ising_bell::lattice::spin_at;
use ising_bell::search::{
    default_h7_grid, grid_sweep, local_maximize, reproduce_published_points, AscentOptions, FreeParam, ParamKind,
    SearchProblem,
};
use ising_bell::specfile::{bundled_spec, parse_spec, write_spec, QuantumBlock, BUNDLED_SPECS};
use ising_bell::{
    build_distribution, chsh, conditional_chsh, metropolis_run, Chsh, Distribution, Independence, McConfig,
    PartialAssignment, Quantum, SignConvention, Spec, DEFAULT_ENUMERATION_CAP,
};

use crate::manifest::RunManifest;
use crate::table::{num, sign, Table};
use crate::{Cli, CliError, Command};

struct Context<'a> {
    cli: &'a Cli,
    spec: Spec,
    quantum: Option<QuantumBlock>,
    convention: SignConvention,
    manifest: RunManifest,
}

impl Context<'_> {
    fn emit(&self, table: &Table) -> Result<(), CliError> {
        let path = table.write(&self.cli.out, self.cli.format, &self.manifest)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn write_file(&self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.cli.out.join(name);
        fs::write(&path, body).map_err(|e| CliError::output(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn lambda(&self, labels: &Option<Vec<String>>) -> Result<Vec<usize>, CliError> {
        let roles = self.spec.require_roles()?;
        match labels {
            None => Ok(roles.hidden.clone()),
            Some(labels) => labels.iter().map(|l| site(&self.spec, l)).collect(),
        }
    }
}

fn site(spec: &Spec, label: &str) -> Result<usize, CliError> {
    spec.resolve_site(label.trim()).ok_or_else(|| CliError::Input(format!("no site labelled {label:?}")))
}

fn load(source: &str) -> Result<(Spec, Option<QuantumBlock>), CliError> {
    let text = match source.strip_prefix("builtin:") {
        Some(name) => bundled_spec(name)
            .ok_or_else(|| {
                let names: Vec<&str> = BUNDLED_SPECS.iter().map(|(n, _)| *n).collect();
                CliError::Input(format!("no bundled spec {name:?}; available: {}", names.join(", ")))
            })?
            .to_string(),
        None => fs::read_to_string(source).map_err(|e| CliError::Input(format!("{source}: {e}")))?,
    };
    let doc = parse_spec(&text).map_err(|e| CliError::Input(format!("{source}: {e}")))?;
    Ok((doc.spec, doc.quantum))
}

fn apply_overrides(cli: &Cli, mut spec: Spec) -> Result<(Spec, Vec<String>), CliError> {
    let o = &cli.overrides;
    let mut applied = Vec::new();
    if let Some(beta) = o.beta {
        spec = spec.with_beta(beta)?;
        applied.push(format!("beta={beta}"));
    }
    if let Some(j) = o.coupling {
        spec = spec.with_uniform_coupling(j)?;
        applied.push(format!("coupling={j}"));
    }
    for f in &o.field {
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| CliError::Input(format!("bad field value in {f:?}")));
        spec = match f.split_once('=') {
            Some((label, v)) => spec.with_field_at(site(&spec, label)?, parse(v)?)?,
            None => spec.with_fields(vec![parse(f)?; spec.n_sites()])?,
        };
        applied.push(format!("field={f}"));
    }
    if o.convention != "minus-mm" {
        applied.push(format!("convention={}", o.convention));
    }
    Ok((spec, applied))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (spec, quantum) = load(&cli.spec)?;
    let (spec, overrides) = apply_overrides(cli, spec)?;
    let convention = SignConvention::parse(&cli.overrides.convention)
        .ok_or_else(|| CliError::Input(format!("unknown convention {:?}", cli.overrides.convention)))?;
    fs::create_dir_all(&cli.out).map_err(|e| CliError::output(&cli.out, e))?;
    let name = command_name(&cli.command);
    let mut manifest = RunManifest::new(name, &cli.spec, overrides, &cli.out);
    if let Command::Mc { seed, .. } = cli.command {
        manifest.seed = Some(seed);
    }
    let ctx = Context { cli, spec, quantum, convention, manifest };
    ctx.write_file(&format!("{name}-manifest.toml"), &ctx.manifest.to_toml())?;
    match &cli.command {
        Command::Chsh { lambda_subset } => cmd_chsh(&ctx, lambda_subset),
        Command::Diagnose { lambda_subset } => cmd_diagnose(&ctx, lambda_subset),
        Command::Sweep { params, symmetric, budget } => cmd_sweep(&ctx, params, *symmetric, *budget),
        Command::Search { params, symmetric, step, tolerance, max_evaluations } => {
            let options =
                AscentOptions { initial_step: *step, tolerance: *tolerance, max_evaluations: *max_evaluations };
            cmd_search(&ctx, params, *symmetric, &options)
        }
        Command::Reproduce { h7 } => cmd_reproduce(&ctx, h7),
        Command::Quantum { transverse, ground, longitudinal, cap } => {
            cmd_quantum(&ctx, *transverse, *ground, *longitudinal, *cap)
        }
        Command::Mc { seed, sweeps, burn_in, thinning, batches, chains } => {
            let config = McConfig {
                seed: *seed,
                sweeps: *sweeps,
                burn_in: *burn_in,
                thinning: *thinning,
                batch_count: *batches,
                chains: *chains,
            };
            cmd_mc(&ctx, &config)
        }
        Command::Dump => cmd_dump(&ctx),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Chsh { .. } => "chsh",
        Command::Diagnose { .. } => "diagnose",
        Command::Sweep { .. } => "sweep",
        Command::Search { .. } => "search",
        Command::Reproduce { .. } => "reproduce",
        Command::Quantum { .. } => "quantum",
        Command::Mc { .. } => "mc",
        Command::Dump => "dump",
    }
}

fn chsh_table(report: &Chsh) -> Table {
    let mut t = Table::new("chsh", &["m_pp", "m_mp", "m_pm", "m_mm", "x_bi", "convention", "achieved_by"]);
    let m = &report.m;
    t.push(vec![
        num(m.pp),
        num(m.mp),
        num(m.pm),
        num(m.mm),
        num(report.x_bi),
        report.convention.to_string(),
        report.achieved_by.to_string(),
    ]);
    t
}

fn witness_text(w: &Witness) -> String {
    let mut parts = Vec::new();
    if !w.lambda.is_empty() {
        parts.push(format!("lambda={}", w.lambda.iter().map(|&s| sign(s)).collect::<String>()));
    }
    parts.push(format!("a={} b={}", sign(w.settings.0), sign(w.settings.1)));
    if let Some((a, b)) = w.other_settings {
        parts.push(format!("a'={} b'={}", sign(a), sign(b)));
    }
    if let Some(o) = w.outcome1 {
        parts.push(format!("s1={}", sign(o)));
    }
    if let Some(o) = w.outcome2 {
        parts.push(format!("s2={}", sign(o)));
    }
    parts.join(" ")
}

fn independence_table(report: &Independence) -> Table {
    let mut t = Table::new("independence", &["statistic", "value", "witness"]);
    for (name, d) in
        [("mi", &report.mi), ("oi", &report.oi), ("pi", &report.pi), ("factorability", &report.factorability)]
    {
        t.push(vec![name.into(), num(d.value), witness_text(&d.witness)]);
    }
    t.push(vec!["mi_total_variation".into(), num(report.mi_total_variation), String::new()]);
    t
}

fn labels(spec: &Spec, sites: &[usize]) -> String {
    sites.iter().map(|&s| spec.label(s)).collect::<Vec<_>>().join(" ")
}

/// CHSH and independence reports for a distribution over the spec's sites.
fn analyse(ctx: &Context, dist: &Distribution, lambda: &[usize]) -> Result<(), CliError> {
    let roles = ctx.spec.require_roles()?;
    let report = chsh(dist, roles, ctx.convention)?;
    ctx.emit(&chsh_table(&report))?;
    let independence = diagnose(dist, roles, lambda)?;
    ctx.emit(&independence_table(&independence))?;
    println!(
        "x_bi = {} ({}); mi = {:.3e}, oi = {:.3e}, pi = {:.3e}, factorability = {:.3e} over lambda = {}",
        report.x_bi,
        report.achieved_by,
        independence.mi.value,
        independence.oi.value,
        independence.pi.value,
        independence.factorability.value,
        labels(&ctx.spec, lambda)
    );
    Ok(())
}

fn cmd_chsh(ctx: &Context, lambda: &Option<Vec<String>>) -> Result<(), CliError> {
    let lambda = ctx.lambda(lambda)?;
    let dist = build_distribution(&ctx.spec, DEFAULT_ENUMERATION_CAP)?;
    analyse(ctx, &dist, &lambda)?;
    let pc = pairwise_correlations(&dist, DEFAULT_CORRELATION_THRESHOLD)?;
    let mut t = Table::new("correlations", &["site_i", "site_j", "dependence"]);
    for i in 0..ctx.spec.n_sites() {
        for j in i + 1..ctx.spec.n_sites() {
            t.push(vec![ctx.spec.label(i), ctx.spec.label(j), num(pc.matrix[i][j])]);
        }
    }
    ctx.emit(&t)?;
    println!("fully pairwise correlated: {}", pc.fully_correlated);
    Ok(())
}

fn cmd_diagnose(ctx: &Context, lambda: &Option<Vec<String>>) -> Result<(), CliError> {
    let roles = ctx.spec.require_roles()?;
    let dist = build_distribution(&ctx.spec, DEFAULT_ENUMERATION_CAP)?;
    let reports = match lambda {
        Some(_) => vec![diagnose(&dist, roles, &ctx.lambda(lambda)?)?],
        None => sweep_subsets(&dist, roles)?,
    };
    let mut t = Table::new("diagnostics", &["lambda", "mi", "oi", "pi", "factorability", "mi_total_variation"]);
    for r in &reports {
        t.push(vec![
            labels(&ctx.spec, &r.lambda_subset),
            num(r.mi.value),
            num(r.oi.value),
            num(r.pi.value),
            num(r.factorability.value),
            num(r.mi_total_variation),
        ]);
    }
    ctx.emit(&t)
}

fn param_kind(spec: &Spec, name: &str) -> Result<ParamKind, CliError> {
    Ok(match name.trim() {
        "J" | "coupling" => ParamKind::Coupling,
        "beta" => ParamKind::Beta,
        "h" => ParamKind::UniformField,
        other => match other.strip_prefix("h_") {
            Some(label) => ParamKind::Field(site(spec, label)?),
            None => return Err(CliError::Input(format!("unknown parameter {name:?}"))),
        },
    })
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|_| CliError::Input(format!("bad number {s:?} in {what}")))
}

/// `NAME=LOW:HIGH:POINTS`.
fn parse_sweep_param(spec: &Spec, text: &str) -> Result<(FreeParam, usize), CliError> {
    let bad = || CliError::Input(format!("expected NAME=LOW:HIGH:POINTS, got {text:?}"));
    let (name, range) = text.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = range.split(':').collect();
    let [lo, hi, points] = parts[..] else { return Err(bad()) };
    let points = points.trim().parse().map_err(|_| bad())?;
    Ok((FreeParam::new(param_kind(spec, name)?, parse_f64(lo, text)?, parse_f64(hi, text)?), points))
}

/// `NAME=LOW:HIGH@START`.
fn parse_search_param(spec: &Spec, text: &str) -> Result<(FreeParam, f64), CliError> {
    let bad = || CliError::Input(format!("expected NAME=LOW:HIGH@START, got {text:?}"));
    let (name, rest) = text.split_once('=').ok_or_else(bad)?;
    let (range, start) = rest.split_once('@').ok_or_else(bad)?;
    let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
    Ok((FreeParam::new(param_kind(spec, name)?, parse_f64(lo, text)?, parse_f64(hi, text)?), parse_f64(start, text)?))
}

fn cmd_sweep(ctx: &Context, params: &[String], symmetric: bool, budget: usize) -> Result<(), CliError> {
    let parsed = params.iter().map(|p| parse_sweep_param(&ctx.spec, p)).collect::<Result<Vec<_>, _>>()?;
    let (free, resolution): (Vec<FreeParam>, Vec<usize>) = parsed.into_iter().unzip();
    let problem = SearchProblem::new(ctx.spec.clone(), free, symmetric, ctx.convention)?;
    let rows = grid_sweep(&problem, &resolution, budget)?;
    let mut header = problem.names();
    header.extend(["x_bi", "mi_dev", "oi_dev", "pi_dev", "fact_dev"].map(String::from));
    let mut t = Table::with_header("sweep", header);
    for r in &rows {
        let mut cells: Vec<String> = r.params.iter().map(|&v| num(v)).collect();
        cells.extend([r.x_bi, r.mi, r.oi, r.pi, r.factorability].map(num));
        t.push(cells);
    }
    ctx.emit(&t)?;
    if let Some(best) = rows.first() {
        println!("best x_bi = {} at {:?}", best.x_bi, best.params);
    }
    Ok(())
}

fn cmd_search(ctx: &Context, params: &[String], symmetric: bool, options: &AscentOptions) -> Result<(), CliError> {
    let parsed = params.iter().map(|p| parse_search_param(&ctx.spec, p)).collect::<Result<Vec<_>, _>>()?;
    let (free, start): (Vec<FreeParam>, Vec<f64>) = parsed.into_iter().unzip();
    let problem = SearchProblem::new(ctx.spec.clone(), free, symmetric, ctx.convention)?;
    let result = local_maximize(&problem, &start, options)?;
    let mut header = vec!["step_index".to_string()];
    header.extend(problem.names());
    header.extend(["x_bi", "step"].map(String::from));
    let mut t = Table::with_header("search", header);
    for (k, p) in result.trace.iter().enumerate() {
        let mut cells = vec![k.to_string()];
        cells.extend(p.params.iter().map(|&v| num(v)));
        cells.extend([num(p.x_bi), num(p.step)]);
        t.push(cells);
    }
    ctx.emit(&t)?;
    println!(
        "x_bi = {} at {:?} after {} evaluations ({})",
        result.x_bi,
        result.params,
        result.evaluations,
        if result.converged { "converged" } else { "evaluation cap reached" }
    );
    Ok(())
}

fn cmd_reproduce(ctx: &Context, h7: &Option<Vec<f64>>) -> Result<(), CliError> {
    let grid = h7.clone().unwrap_or_else(default_h7_grid);
    let report = reproduce_published_points(&geometry_family(), &grid, ctx.convention)?;
    let mut t =
        Table::new("reproduction", &["geometry", "point_one", "point_two", "point_two_h7", "point_two_max", "matches"]);
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in &report.rows {
        t.push(vec![
            r.geometry.clone(),
            num(r.point_one),
            opt(r.point_two),
            opt(r.point_two_h7),
            opt(r.point_two_max),
            r.matches_both(report.tolerance).to_string(),
        ]);
    }
    ctx.emit(&t)?;
    let mut text = ctx.manifest.lines(true).join("\n");
    text.push_str("\n\n");
    text.push_str(&report.render());
    ctx.write_file("reproduction-report.txt", &text)?;
    match report.matched() {
        Some(r) => println!("MATCHED: {}", r.geometry),
        None => println!("NOT MATCHED: see reproduction-report.txt for the best values reached"),
    }
    Ok(())
}

fn spins(n: usize, index: u64) -> String {
    (0..n).map(|s| sign(spin_at(index, s))).collect()
}

fn cmd_quantum(
    ctx: &Context,
    transverse: Option<f64>,
    ground: bool,
    longitudinal: bool,
    cap: usize,
) -> Result<(), CliError> {
    let block = ctx.quantum;
    let coupling = ctx.cli.overrides.coupling.or(block.map(|q| q.coupling)).unwrap_or(1.0);
    let transverse = transverse
        .or(block.map(|q| q.transverse))
        .ok_or_else(|| CliError::Input("no transverse coupling: pass --transverse or add a [quantum] block".into()))?;
    let beta = ctx.cli.overrides.beta.or(block.and_then(|q| q.beta)).unwrap_or(ctx.spec.beta());
    let mut model = Quantum::new(ctx.spec.clone(), coupling, transverse, beta, cap)?;
    if longitudinal || block.is_some_and(|q| q.longitudinal) {
        model = model.with_longitudinal_fields();
    }
    let spectrum = model.eigen()?;
    let mut t = Table::new("eigenvalues", &["k", "energy"]);
    for (k, e) in spectrum.values.iter().enumerate() {
        t.push(vec![k.to_string(), num(*e)]);
    }
    ctx.emit(&t)?;
    let dist = if ground { model.ground_z_distribution()? } else { model.thermal_z_distribution()? };
    let n = ctx.spec.n_sites();
    let mut t = Table::new("distribution", &["index", "spins", "probability"]);
    for (idx, p) in dist.probs().iter().enumerate() {
        t.push(vec![idx.to_string(), spins(n, idx as u64), num(*p)]);
    }
    ctx.emit(&t)?;
    println!("J = {coupling}, h = {transverse}, beta = {beta}; ground energy {}", spectrum.values[0]);
    if let Some(roles) = ctx.spec.roles() {
        if roles.hidden.is_empty() {
            let report = chsh(&dist, roles, ctx.convention)?;
            ctx.emit(&chsh_table(&report))?;
            println!("x_bi = {} ({})", report.x_bi, report.achieved_by);
        } else {
            analyse(ctx, &dist, &roles.hidden)?;
        }
    }
    Ok(())
}

fn cmd_mc(ctx: &Context, config: &McConfig) -> Result<(), CliError> {
    let spec = &ctx.spec;
    let run = metropolis_run(spec, config)?;
    let mut t = Table::new("mc-estimates", &["quantity", "value", "std_error", "n_effective"]);
    let mut push = |name: String, e: ising_bell::Estimate| {
        t.push(vec![name, num(e.value), num(e.std_error), num(e.n_effective)]);
    };
    for s in 0..spec.n_sites() {
        let eta = PartialAssignment::from_pairs(&[(s, 1)])?;
        push(format!("P(s_{}=+)", spec.label(s)), run.marginal(&eta));
    }
    if spec.roles().is_some() {
        let (x, m) = conditional_chsh(spec, config, ctx.convention)?;
        for (a, b) in SETTING_PAIRS {
            let tag = |v: i8| if v > 0 { 'p' } else { 'm' };
            push(format!("m_{}{}", tag(a), tag(b)), m.get(a, b));
        }
        push("x_bi".into(), x);
    }
    ctx.emit(&t)?;
    println!("acceptance rate {:.4} over {} samples", run.acceptance_rate, run.n_samples());
    Ok(())
}

fn cmd_dump(ctx: &Context) -> Result<(), CliError> {
    let spec = &ctx.spec;
    let dist = build_distribution(spec, DEFAULT_ENUMERATION_CAP)?;
    let n = spec.n_sites();
    let mut t = Table::new("distribution", &["index", "spins", "energy", "probability"]);
    for (idx, p) in dist.probs().iter().enumerate() {
        t.push(vec![idx.to_string(), spins(n, idx as u64), num(spec.energy_of_index(idx as u64)), num(*p)]);
    }
    ctx.emit(&t)?;
    ctx.write_file("spec.toml", &write_spec(spec, ctx.quantum.as_ref()))?;
    println!("Z = {}", dist.partition_function());
    Ok(())
}
