use std::error::Error;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use mrma_core::harness::experiment::{
    run_experiment, summarize, write_diagnostics_csv, write_results_csv, write_summary_csv, DatasetSource,
    ExperimentConfig, MethodKind, SyntheticSource,
};
use mrma_core::harness::multi::{
    run_multi_experiment, summarize_multi, write_multi_results_csv, write_multi_summary_csv, write_peer_csv,
    MultiExperimentConfig,
};
use mrma_core::harness::synthetic::{SlopeSpec, GRID_POINTS};
use mrma_core::harness::{load_dataset_csv, Generator, Preset};
use mrma_core::oracles::{mc_total_variation, omega_heatmap, write_heatmap_csv, write_tv_csv};
use mrma_core::{BasisSpec, Epsilon, Method, MrmaConfig, RescaleKind, RunMeta, TrainConfig};

use crate::{Cli, Command, HeatmapArgs, MultiArgs, RealArgs, SingleArgs, SizeArgs, TrainArgs, TvArgs};

type CliResult<T> = Result<T, Box<dyn Error>>;

pub fn dispatch(cli: &Cli, command_line: &str) -> CliResult<()> {
    if cli.jobs == 0 {
        return Err("--jobs must be at least 1".into());
    }
    let meta = RunMeta::new(command_line, cli.seed);
    match &cli.command {
        Command::SimulateSingle(a) => simulate_single(cli, a, meta),
        Command::SimulateMulti(a) => simulate_multi(cli, a, meta),
        Command::OracleHeatmap(a) => oracle_heatmap(cli, a, meta),
        Command::OracleTv(a) => oracle_tv(cli, a, meta),
        Command::RealData(a) => real_data(cli, a, meta),
    }
}

fn parse_list<T>(s: &str, what: &str) -> CliResult<Vec<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let items = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("--{what}: {e}")))
        .collect::<Result<Vec<T>, String>>()?;
    if items.is_empty() {
        return Err(format!("--{what} is empty").into());
    }
    Ok(items)
}

/// `start:stop:step`, both ends included when the step divides the range.
pub fn parse_grid(s: &str, what: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("--{what} must be start:stop:step, got {s:?}"))?;
    let [start, stop, step] = parts[..] else {
        return Err(format!("--{what} must be start:stop:step, got {s:?}").into());
    };
    if !(step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite() && stop >= start) {
        return Err(format!("--{what} needs a positive step and stop >= start, got {s:?}").into());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Round away the drift of start + i * step.
    Ok((0..count)
        .map(|i| ((start + step * i as f64) * 1e12).round() / 1e12)
        .collect())
}

fn apply_sizes(config: &mut MrmaConfig, a: &SizeArgs) {
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut config.n_train, a.n_train);
    set(&mut config.n_eval, a.n_eval);
    set(&mut config.n0, a.n0);
    set(&mut config.n1, a.n1);
    set(&mut config.b, a.b);
    if let Some(r0) = a.r0 {
        config.r0 = r0;
    }
}

fn train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut config = TrainConfig::with_method(a.classifier.parse::<Method>()?);
    if let Some(it) = a.iterations {
        config.iterations = it;
    }
    if let Some(reg) = a.regularization {
        config.regularization = reg;
    }
    Ok(config)
}

fn generator(basis: &str, rescale: &str) -> CliResult<(Generator, Vec<String>)> {
    let basis: BasisSpec = basis.parse()?;
    let rescale: RescaleKind = rescale.parse()?;
    let notes = vec![format!("basis={basis} rescale={rescale} grid_points={GRID_POINTS}")];
    Ok((Generator::new(&basis, rescale)?, notes))
}

fn methods(arg: &Option<String>) -> CliResult<Vec<MethodKind>> {
    match arg {
        Some(s) => parse_list(s, "method"),
        None => Ok(MethodKind::ALL.to_vec()),
    }
}

fn write_file<F>(dir: &Path, name: &str, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush())
        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn print_summary(rows: &[mrma_core::harness::SummaryRow]) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{:>8}  {:<10} {:>8} {:>8}", "epsilon", "method", "mean", "stderr");
    for r in rows {
        let _ = writeln!(out, "{:>8}  {:<10} {:>8.4} {:>8.4}", r.epsilon.to_string(), r.method.to_string(), r.mean, r.stderr);
    }
}

fn simulate_single(cli: &Cli, a: &SingleArgs, meta: RunMeta) -> CliResult<()> {
    let preset: Preset = a.preset.parse()?;
    if preset.is_multi() {
        return Err(format!("preset {preset} is for simulate-multi").into());
    }
    let values = preset.values();
    let mut mrma = values.mrma;
    apply_sizes(&mut mrma, &a.sizes);
    mrma.train = train_config(&a.train)?;
    let config = ExperimentConfig {
        epsilons: match &a.epsilon {
            Some(s) => parse_list(s, "epsilon")?,
            None => values.epsilons.iter().map(|&e| Epsilon::new(e)).collect::<Result<_, _>>()?,
        },
        trials: a.trials.unwrap_or(values.trials),
        test_size: a.test_size.unwrap_or(values.test_size),
        mrma,
        methods: methods(&a.method)?,
        seed: cli.seed,
        jobs: cli.jobs,
        diagnostics: a.diagnostics,
    };
    let (generator, notes) = generator(&a.synthetic.basis, &a.synthetic.rescale)?;
    let meta = notes.into_iter().fold(meta.with_note(format!("preset={preset}")), RunMeta::with_note);
    let source = SyntheticSource {
        generator,
        slope: SlopeSpec::reference(),
    };
    let out = run_experiment(&source, &config)?;
    let summary = summarize(&out.results);
    write_file(&cli.out, "single_results.csv", |w| write_results_csv(w, &meta, &out.results))?;
    write_file(&cli.out, "single_summary.csv", |w| write_summary_csv(w, &meta, &summary))?;
    if a.diagnostics {
        write_file(&cli.out, "single_diagnostics.csv", |w| {
            write_diagnostics_csv(w, &meta, &out.diagnostics)
        })?;
    }
    print_summary(&summary);
    Ok(())
}

fn simulate_multi(cli: &Cli, a: &MultiArgs, meta: RunMeta) -> CliResult<()> {
    let preset: Preset = a.preset.parse()?;
    if !preset.is_multi() {
        return Err(format!("preset {preset} is for simulate-single").into());
    }
    let values = preset.values();
    let mut local = values.mrma;
    apply_sizes(&mut local, &a.sizes);
    local.train = train_config(&a.train)?;
    let config = MultiExperimentConfig {
        epsilons: match &a.epsilon {
            Some(s) => parse_list(s, "epsilon")?,
            None => values.epsilons.iter().map(|&e| Epsilon::new(e)).collect::<Result<_, _>>()?,
        },
        trials: a.trials.unwrap_or(values.trials),
        test_size: a.test_size.unwrap_or(values.test_size),
        groups: values.groups,
        local,
        r0_star: a.r0_star.unwrap_or(values.r0_star),
        seed: cli.seed,
        jobs: cli.jobs,
    };
    let (generator, notes) = generator(&a.synthetic.basis, &a.synthetic.rescale)?;
    let meta = notes.into_iter().fold(meta.with_note(format!("preset={preset}")), RunMeta::with_note);
    let out = run_multi_experiment(&generator, &config)?;
    let summary = summarize_multi(&out.results);
    write_file(&cli.out, "multi_results.csv", |w| write_multi_results_csv(w, &meta, &out.results))?;
    write_file(&cli.out, "multi_summary.csv", |w| write_multi_summary_csv(w, &meta, &summary))?;
    if a.diagnostics {
        write_file(&cli.out, "multi_peers.csv", |w| write_peer_csv(w, &meta, &out.peers))?;
    }
    let mut stdout = io::stdout().lock();
    let _ = writeln!(stdout, "{:>8}  {:>5}  {:<6} {:>8} {:>8}", "epsilon", "group", "method", "mean", "stderr");
    for r in &summary {
        let _ = writeln!(
            stdout,
            "{:>8}  {:>5}  {:<6} {:>8.4} {:>8.4}",
            r.epsilon.to_string(),
            r.group,
            r.method.name(),
            r.mean,
            r.stderr
        );
    }
    Ok(())
}

fn oracle_heatmap(cli: &Cli, a: &HeatmapArgs, meta: RunMeta) -> CliResult<()> {
    let epsilons: Vec<Epsilon> = parse_list(&a.epsilon_z, "epsilon-z")?;
    let z0 = parse_grid(&a.z0_grid, "z0-grid")?;
    let z = parse_grid(&a.z_grid, "z-grid")?;
    let points = omega_heatmap(&epsilons, &z0, &z)?;
    write_file(&cli.out, "omega_heatmap.csv", |w| write_heatmap_csv(w, &meta, &points))
}

fn oracle_tv(cli: &Cli, a: &TvArgs, meta: RunMeta) -> CliResult<()> {
    let dims: Vec<usize> = parse_list(&a.d, "d")?;
    let epsilons: Vec<Epsilon> = parse_list(&a.epsilon_z, "epsilon-z")?;
    let pool = rayon_pool(cli.jobs)?;
    let mut rows = Vec::new();
    for &d in &dims {
        for &e in &epsilons {
            rows.push(pool.install(|| mc_total_variation(d, e, a.samples, a.bins, cli.seed))?);
        }
    }
    let meta = meta.with_note(format!("bins_per_axis={}", a.bins));
    write_file(&cli.out, "tv_curve.csv", |w| write_tv_csv(w, &meta, &rows))?;
    for r in &rows {
        println!("d={:<3} epsilon_z={:<6} tv={:.4} (se {:.4})", r.d, r.epsilon_z.to_string(), r.estimate, r.stderr);
    }
    Ok(())
}

fn rayon_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn real_data(cli: &Cli, a: &RealArgs, meta: RunMeta) -> CliResult<()> {
    let dataset = load_dataset_csv(&a.csv).map_err(|e| match e {
        mrma_core::Error::Io(io) => format!("{}: {io}", a.csv.display()).into(),
        other => Box::<dyn Error>::from(other),
    })?;
    let n_test = (dataset.len() as f64 * a.test_fraction).round() as usize;
    let available = dataset.len().saturating_sub(n_test);
    let n_eval = a.b * a.n1;
    if available <= n_eval {
        return Err(format!(
            "{} training records cannot hold B * n1 = {n_eval} evaluation clients and a training pool",
            available
        )
        .into());
    }
    let mrma = MrmaConfig {
        n_train: available - n_eval,
        n_eval,
        n0: a.n0,
        n1: a.n1,
        b: a.b,
        budget: mrma_core::PrivacyBudget::unlimited(),
        r0: a.r0,
        train: train_config(&a.train)?,
    };
    let config = ExperimentConfig {
        epsilons: parse_list(&a.epsilon, "epsilon")?,
        trials: a.trials,
        test_size: n_test.max(1),
        mrma,
        methods: methods(&a.method)?,
        seed: cli.seed,
        jobs: cli.jobs,
        diagnostics: a.diagnostics,
    };
    let meta = meta.with_note(format!(
        "records={} features={} n_train={} n_eval={n_eval} test_fraction={}",
        dataset.len(),
        dataset.dim(),
        available - n_eval,
        a.test_fraction
    ));
    let source = DatasetSource {
        dataset,
        test_fraction: a.test_fraction,
    };
    let out = run_experiment(&source, &config)?;
    let summary = summarize(&out.results);
    write_file(&cli.out, "real_results.csv", |w| write_results_csv(w, &meta, &out.results))?;
    write_file(&cli.out, "real_summary.csv", |w| write_summary_csv(w, &meta, &summary))?;
    if a.diagnostics {
        write_file(&cli.out, "real_diagnostics.csv", |w| write_diagnostics_csv(w, &meta, &out.diagnostics))?;
    }
    print_summary(&summary);
    Ok(())
}
