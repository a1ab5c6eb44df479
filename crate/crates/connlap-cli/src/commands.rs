//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use connlap::experiments::{
    self, BandwidthRule, ExperimentConfig, TransportSource,
};
use connlap::graph::{assemble_operator, attach_connection, build_affinity, ConnectionSource, OperatorForm};
use connlap::io::{self, fmt_f64, RunManifest};
use connlap::kernels::KernelSpec;
use connlap::manifolds::{DensitySpec, ManifoldModel, PointCloud};
use connlap::spectral::{eigendecompose, rescale_eigenvalues, vdm_embed, EigOptions};
use connlap::tangent;
use connlap::Error;

pub enum CommandError {
    Validation(String),
    Numerical(String),
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        match e {
            Error::EigenNonConvergence(_)
            | Error::QuadratureNonConvergence { .. }
            | Error::PowerOverflow(_) => CommandError::Numerical(e.to_string()),
            other => CommandError::Validation(other.to_string()),
        }
    }
}

type CmdResult = Result<(), CommandError>;

fn invalid(msg: impl Into<String>) -> CommandError {
    CommandError::Validation(msg.into())
}

#[derive(Parser)]
#[command(name = "connlap", version, about = "Graph connection Laplacians from sampled manifolds")]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample points from a catalogued manifold.
    Sample(SampleArgs),
    /// Build the affinity + connection graph and report its degrees.
    BuildGraph(GraphArgs),
    /// Estimate tangent frames by local PCA.
    LocalPca(PcaArgs),
    /// Eigendecompose the normalized operator and rescale the spectrum.
    Spectrum(SpectrumArgs),
    /// Vector diffusion map coordinates.
    VdmEmbed(VdmArgs),
    /// Orientability verdict from the Z2 determinant connection.
    Orientability(OrientArgs),
    /// Run a convergence experiment from a config file.
    Converge(ConvergeArgs),
    /// Print a kernel moment.
    Moments(MomentArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    manifold: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform")]
    density: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    /// Cloud directory or points.csv path.
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    h: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// trivial | analytic | pca | z2-analytic | z2-pca
    #[arg(long, default_value = "trivial")]
    source: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// Intrinsic dimension of the frames.
    #[arg(long)]
    d: usize,
    /// Bandwidth; defaults to the diameter-calibrated n^(-2/(d+2)) schedule.
    #[arg(long)]
    h_pca: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// Bandwidth; defaults to the alpha-dependent schedule.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value = "trivial")]
    source: String,
    #[arg(long, default_value_t = 12)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VdmArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value = "analytic")]
    source: String,
    #[arg(long, default_value_t = 1)]
    t: u32,
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Divide coordinates by the vertex degree (the V'_t variant).
    #[arg(long, default_value_t = false)]
    normalized: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OrientArgs {
    #[arg(long)]
    manifold: String,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// analytic | pca
    #[arg(long, default_value = "analytic")]
    frames: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override any config key: --set key=value (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MomentArgs {
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    r: u32,
    #[arg(long, default_value_t = 0)]
    l: u32,
    #[arg(long, default_value_t = 0)]
    k: u32,
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.cmd {
        Cmd::Sample(a) => sample(a),
        Cmd::BuildGraph(a) => build_graph(a),
        Cmd::LocalPca(a) => local_pca_cmd(a),
        Cmd::Spectrum(a) => spectrum(a),
        Cmd::VdmEmbed(a) => vdm(a),
        Cmd::Orientability(a) => orientability(a),
        Cmd::Converge(a) => converge(a),
        Cmd::Moments(a) => moments(a),
    }
}

fn manifest(
    command: &str,
    config: BTreeMap<String, String>,
    seeds: Vec<u64>,
    t0: Instant,
    outputs: Vec<PathBuf>,
    dir: &Path,
) -> CmdResult {
    RunManifest {
        command: command.to_string(),
        config,
        seeds,
        wall_ms: t0.elapsed().as_millis(),
        outputs,
    }
    .save(dir)
    .map_err(CommandError::from)?;
    Ok(())
}

fn sample(a: SampleArgs) -> CmdResult {
    let t0 = Instant::now();
    let model = ManifoldModel::parse(&a.manifold)?;
    let density = DensitySpec::parse(&a.density)?;
    let cloud: PointCloud<f64> = model.sample(a.n, density, a.seed)?;
    let outputs = io::save_cloud(&cloud, &a.out)?;
    let mut config = BTreeMap::new();
    config.insert("manifold".into(), model.name().into());
    config.insert("density".into(), density.name().into());
    config.insert("n".into(), a.n.to_string());
    config.insert("seed".into(), a.seed.to_string());
    manifest("sample", config, vec![a.seed], t0, outputs, &a.out)
}

/// Load a cloud and attach the requested connection.
fn load_graph(
    cloud_path: &Path,
    h: f64,
    alpha: f64,
    source: &str,
) -> Result<(PointCloud<f64>, connlap::graph::ConnectionGraph<f64>, usize), CommandError> {
    let cloud = io::load_cloud(cloud_path)?;
    let model = cloud
        .manifold
        .ok_or_else(|| invalid("cloud has no manifold tag; analytic/pca sources need one"))?;
    let d = model.intrinsic_dim();
    let spec = KernelSpec::gaussian();
    let affinity = build_affinity(&cloud, &spec, h, alpha, d);
    let transport = TransportSource::parse(source)?;
    let (frames, src) = match transport {
        TransportSource::Trivial => (None, ConnectionSource::Trivial),
        TransportSource::Analytic => (
            Some(model.analytic_frames(&cloud)?),
            ConnectionSource::Analytic,
        ),
        TransportSource::EstimatedPca => (
            Some(tangent::local_pca_frames_adaptive(
                &cloud,
                tangent::default_h_pca_for(model, cloud.len()),
                d,
                &spec,
            )?),
            ConnectionSource::EstimatedPca,
        ),
        TransportSource::Z2Analytic => (
            Some(model.analytic_frames(&cloud)?),
            ConnectionSource::Z2Determinant,
        ),
        TransportSource::Z2Pca => (
            Some(tangent::local_pca_frames_adaptive(
                &cloud,
                tangent::default_h_pca_for(model, cloud.len()),
                d,
                &spec,
            )?),
            ConnectionSource::Z2Determinant,
        ),
    };
    let graph = attach_connection(affinity, src, frames.as_deref(), Some((model, &cloud)))?;
    Ok((cloud, graph, d))
}

fn default_h(cloud: &PointCloud<f64>, alpha: f64) -> Result<f64, CommandError> {
    let model = cloud
        .manifold
        .ok_or_else(|| invalid("no --h given and the cloud has no manifold tag"))?;
    let rule = if alpha == 0.0 {
        BandwidthRule::alpha_zero()
    } else {
        BandwidthRule::alpha_positive()
    };
    Ok(rule.h(cloud.len(), model.intrinsic_dim()))
}

fn build_graph(a: GraphArgs) -> CmdResult {
    let t0 = Instant::now();
    let (cloud, graph, _) = load_graph(&a.cloud, a.h, a.alpha, &a.source)?;

    let mut degrees = String::new();
    for (i, d) in graph.affinity.degrees.iter().enumerate() {
        degrees.push_str(&format!("{i},{}\n", fmt_f64(*d)));
    }
    let degrees_path = a.out.join("degrees.csv");
    io::atomic_write(&degrees_path, &degrees)?;

    let meta = format!(
        "n={}\nq={}\nstored_edges={}\nh={}\nalpha={}\nsource={}\nisolated={}\n",
        graph.n(),
        graph.q,
        graph.connections.pattern.nnz(),
        fmt_f64(a.h),
        fmt_f64(a.alpha),
        a.source,
        graph.affinity.isolated.len(),
    );
    let meta_path = a.out.join("graph.meta");
    io::atomic_write(&meta_path, &meta)?;

    let mut config = BTreeMap::new();
    config.insert("cloud".into(), a.cloud.display().to_string());
    config.insert("h".into(), fmt_f64(a.h));
    config.insert("alpha".into(), fmt_f64(a.alpha));
    config.insert("source".into(), a.source.clone());
    manifest(
        "build-graph",
        config,
        vec![cloud.seed],
        t0,
        vec![degrees_path, meta_path],
        &a.out,
    )
}

fn local_pca_cmd(a: PcaArgs) -> CmdResult {
    let t0 = Instant::now();
    let cloud = io::load_cloud(&a.cloud)?;
    let h_pca = match (a.h_pca, cloud.manifold) {
        (Some(h), _) => h,
        (None, Some(model)) => tangent::default_h_pca_for(model, cloud.len()),
        (None, None) => tangent::default_h_pca(cloud.len(), a.d, 1.0),
    };
    let spec = KernelSpec::gaussian();
    let mut frames_text = String::new();
    let mut eig_text = String::new();
    for i in 0..cloud.len() {
        let res = tangent::local_pca(&cloud, i, h_pca, a.d, &spec)?;
        let b = &res.frame.basis;
        let row: Vec<String> = (0..b.nrows())
            .flat_map(|r| (0..b.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| fmt_f64(b[(r, c)]))
            .collect();
        frames_text.push_str(&row.join(","));
        frames_text.push('\n');
        let evs: Vec<String> = res.eigenvalues.iter().map(|v| fmt_f64(*v)).collect();
        eig_text.push_str(&evs.join(","));
        eig_text.push('\n');
    }
    let frames_path = a.out.join("frames.csv");
    io::atomic_write(&frames_path, &frames_text)?;
    let eig_path = a.out.join("pca_eigenvalues.csv");
    io::atomic_write(&eig_path, &eig_text)?;

    let mut config = BTreeMap::new();
    config.insert("cloud".into(), a.cloud.display().to_string());
    config.insert("d".into(), a.d.to_string());
    config.insert("h_pca".into(), fmt_f64(h_pca));
    manifest(
        "local-pca",
        config,
        vec![cloud.seed],
        t0,
        vec![frames_path, eig_path],
        &a.out,
    )
}

fn spectrum(a: SpectrumArgs) -> CmdResult {
    let t0 = Instant::now();
    let pre_cloud = io::load_cloud(&a.cloud)?;
    let h = match a.h {
        Some(h) => h,
        None => default_h(&pre_cloud, a.alpha)?,
    };
    let (cloud, graph, d) = load_graph(&a.cloud, h, a.alpha, &a.source)?;
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(a.k))?;
    let rescaled = rescale_eigenvalues(&dec, h, &KernelSpec::gaussian(), d)?;

    let mut text = String::from("# index,markov_eigenvalue,rescaled_eigenvalue,residual\n");
    #[allow(clippy::needless_range_loop)]
    for l in 0..dec.len() {
        text.push_str(&format!(
            "{l},{},{},{}\n",
            fmt_f64(dec.eigenvalues[l]),
            fmt_f64(rescaled[l]),
            fmt_f64(dec.residuals[l]),
        ));
    }
    let path = a.out.join("spectrum.csv");
    io::atomic_write(&path, &text)?;

    let mut config = BTreeMap::new();
    config.insert("cloud".into(), a.cloud.display().to_string());
    config.insert("h".into(), fmt_f64(h));
    config.insert("alpha".into(), fmt_f64(a.alpha));
    config.insert("source".into(), a.source.clone());
    config.insert("k".into(), a.k.to_string());
    manifest("spectrum", config, vec![cloud.seed], t0, vec![path], &a.out)
}

fn vdm(a: VdmArgs) -> CmdResult {
    let t0 = Instant::now();
    let pre_cloud = io::load_cloud(&a.cloud)?;
    let h = match a.h {
        Some(h) => h,
        None => default_h(&pre_cloud, a.alpha)?,
    };
    let (cloud, graph, _) = load_graph(&a.cloud, h, a.alpha, &a.source)?;
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(a.m))?;
    let emb = vdm_embed(&dec, a.t, a.m.min(dec.len()), a.normalized);

    let mut text = String::new();
    for i in 0..emb.len() {
        let row: Vec<String> = emb.point(i).iter().map(|v| fmt_f64(*v)).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = a.out.join("vdm.csv");
    io::atomic_write(&path, &text)?;

    let mut config = BTreeMap::new();
    config.insert("cloud".into(), a.cloud.display().to_string());
    config.insert("h".into(), fmt_f64(h));
    config.insert("alpha".into(), fmt_f64(a.alpha));
    config.insert("source".into(), a.source.clone());
    config.insert("t".into(), a.t.to_string());
    config.insert("m".into(), a.m.to_string());
    config.insert("normalized".into(), a.normalized.to_string());
    manifest("vdm-embed", config, vec![cloud.seed], t0, vec![path], &a.out)
}

fn orientability(a: OrientArgs) -> CmdResult {
    let t0 = Instant::now();
    let model = ManifoldModel::parse(&a.manifold)?;
    let use_pca = match a.frames.as_str() {
        "analytic" => false,
        "pca" => true,
        other => return Err(invalid(format!("unknown frame source `{other}`"))),
    };
    let out = experiments::orientability_test::<f64>(model, a.n, use_pca, a.seed)?;
    let mut report = experiments::ConvergenceReport::default();
    report.provenance.push(("experiment".into(), "orientability".into()));
    report.provenance.push(("manifold".into(), model.name().into()));
    report.provenance.push(("frames".into(), a.frames.clone()));
    report.push(a.n, out.h, "top_dm", out.top_dm);
    report.push(a.n, out.h, "top_odm", out.top_odm);
    report.push(a.n, out.h, "deficit", out.deficit);
    report.verdict("orientable", out.orientable);
    let outputs = io::save_report(&report, &a.out)?;

    println!(
        "{}: {} (deficit {:.5})",
        model.name(),
        if out.orientable { "orientable" } else { "non-orientable" },
        out.deficit
    );

    let mut config = BTreeMap::new();
    config.insert("manifold".into(), model.name().into());
    config.insert("n".into(), a.n.to_string());
    config.insert("seed".into(), a.seed.to_string());
    config.insert("frames".into(), a.frames.clone());
    manifest("orientability", config, vec![a.seed], t0, outputs, &a.out)
}

fn moments(a: MomentArgs) -> CmdResult {
    if a.kernel != "gaussian" {
        return Err(invalid(format!("unknown kernel family `{}`", a.kernel)));
    }
    let spec = KernelSpec::gaussian();
    let m = spec.kernel_moment(a.d, a.r, a.l, a.k)?;
    println!("{m:.6}");
    Ok(())
}

// ---------------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------------

/// Build an `ExperimentConfig` from key=value pairs; every key can also come
/// in as a `--set` override.
fn experiment_from_config(
    pairs: &BTreeMap<String, String>,
) -> Result<(String, ExperimentConfig), CommandError> {
    let get = |k: &str| pairs.get(k).map(|s| s.as_str());
    let experiment = get("experiment").unwrap_or("spectral").to_string();
    let manifold = ManifoldModel::parse(get("manifold").unwrap_or("s1"))?;
    let mut cfg = ExperimentConfig::new(manifold);

    if let Some(v) = get("density") {
        cfg.density = DensitySpec::parse(v)?;
    }
    if let Some(v) = get("n_schedule") {
        cfg.n_schedule = v
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| invalid(format!("bad n_schedule `{v}`")))?;
    }
    let parse_f64 = |k: &str, v: &str| -> Result<f64, CommandError> {
        v.parse().map_err(|_| invalid(format!("bad {k} `{v}`")))
    };
    if let Some(v) = get("alpha") {
        cfg.alpha = parse_f64("alpha", v)?;
    }
    if let Some(v) = get("gamma") {
        cfg.gamma = parse_f64("gamma", v)?;
    }
    let c = get("bandwidth_c").map(|v| parse_f64("bandwidth_c", v)).transpose()?.unwrap_or(1.0);
    cfg.bandwidth_rule = match get("bandwidth_rule").unwrap_or("alpha_positive") {
        "alpha_zero" => BandwidthRule::AlphaZero { c },
        "alpha_positive" => BandwidthRule::AlphaPositive { c },
        "fixed" => BandwidthRule::Fixed {
            h: get("fixed_h")
                .map(|v| parse_f64("fixed_h", v))
                .transpose()?
                .ok_or_else(|| invalid("bandwidth_rule=fixed needs fixed_h"))?,
        },
        other => return Err(invalid(format!("unknown bandwidth_rule `{other}`"))),
    };
    if let Some(v) = get("transport") {
        cfg.transport_source = TransportSource::parse(v)?;
    }
    if let Some(v) = get("seed") {
        cfg.seed = v.parse().map_err(|_| invalid(format!("bad seed `{v}`")))?;
    }
    if let Some(v) = get("eig_count") {
        cfg.eig_count = v.parse().map_err(|_| invalid(format!("bad eig_count `{v}`")))?;
    }
    if let Some(v) = get("field") {
        cfg.field = Some(v.to_string());
    }
    if let Some(v) = get("t") {
        cfg.t = parse_f64("t", v)?;
    }
    if let Some(v) = get("reps") {
        cfg.reps = v.parse().map_err(|_| invalid(format!("bad reps `{v}`")))?;
    }
    Ok((experiment, cfg))
}

fn converge(a: ConvergeArgs) -> CmdResult {
    let t0 = Instant::now();
    if !a.config.exists() {
        return Err(invalid(format!(
            "config file `{}` does not exist",
            a.config.display()
        )));
    }
    let mut pairs = io::load_config(&a.config)?;
    for s in &a.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| invalid(format!("--set expects key=value, got `{s}`")))?;
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    let (experiment, cfg) = experiment_from_config(&pairs)?;

    let report = match experiment.as_str() {
        "spectral" => experiments::spectral_error::<f64>(&cfg)?,
        "pointwise" => {
            let field = cfg
                .field
                .clone()
                .ok_or_else(|| invalid("pointwise experiment needs field=..."))?;
            experiments::pointwise_error::<f64>(&cfg, &field)?
        }
        "heat" => experiments::heat_power_experiment::<f64>(&cfg, cfg.t)?,
        other => return Err(invalid(format!("unknown experiment `{other}`"))),
    };
    let outputs = io::save_report(&report, &a.out)?;
    manifest("converge", pairs, vec![cfg.seed], t0, outputs, &a.out)
}
