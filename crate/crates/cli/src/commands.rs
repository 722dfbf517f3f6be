//! One function per subcommand, each a thin composition of library calls.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::info;
use pqcascade::bench::{run_k_sweep, run_scaling_bench, BenchConfig, BenchStrategy};
use pqcascade::embedding::{
    decode_manifest, generate_synthetic, load_dataset, manifest_path, save_dataset, ManifestRow,
    SyntheticConfig,
};
use pqcascade::eval::{
    attach_ground_truth, evaluate, read_results_jsonl, write_results_jsonl, EvalConfig, ResultLine,
};
use pqcascade::filter::{
    build_index_owned, default_candidate_size, load_index, save_index, search_exact_batch,
    search_pq_batch, DEFAULT_CANDIDATE_CAP,
};
use pqcascade::quantizer::{load_codebook, save_codebook, train_codebooks};
use pqcascade::rerank::{
    cascade_search_batch, ReferenceSlowMatcher, ScoreTableMatcher, SlowMatcher,
};
use pqcascade::{CandidateList, Dataset, Error, FusionStrategy, Metric};

use crate::args::{
    BenchArgs, BenchKind, BuildIndexArgs, CascadeSearchArgs, EvaluateArgs, GenDataArgs, KArg,
    SearchArgs, TrainCodebookArgs,
};
use crate::{at, CliError};

const DISTRACTOR_STREAM: u64 = 0x6469_7374;
const STRANGER_STREAM: u64 = 0x7374_726e;
const K_SWEEP_GRID: [usize; 10] = [10, 20, 50, 100, 200, 500, 1_000, 2_000, 5_000, 10_000];

type Res = Result<(), CliError>;

fn usage<T: FromStr<Err = Error>>(value: &str, flag: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|e: Error| CliError::Usage(format!("--{flag}: {e}")))
}

fn resolve_k(k: KArg, gallery_size: usize) -> usize {
    match k {
        KArg::Fixed(k) => k,
        KArg::Auto => {
            let k = default_candidate_size(gallery_size, DEFAULT_CANDIDATE_CAP);
            info!("k auto resolved to {k} for gallery size {gallery_size}");
            k
        }
    }
}

fn write_results(
    path: &Path,
    queries: &Dataset,
    lists: &[CandidateList],
    threshold: Option<f64>,
) -> Res {
    let threshold = threshold.unwrap_or(f64::NEG_INFINITY);
    let lines: Vec<ResultLine> = queries
        .ids()
        .iter()
        .zip(lists)
        .map(|(&id, list)| ResultLine::new(id, list, threshold))
        .collect();
    write_results_jsonl(
        BufWriter::new(at(path, File::create(path).map_err(Error::from))?),
        &lines,
    )?;
    info!("wrote {} result lines to {}", lines.len(), path.display());
    Ok(())
}

pub fn gen_data(a: &GenDataArgs, seed: u64) -> Res {
    let synth = |n: usize, per: usize, seed: u64| {
        SyntheticConfig::new(n, per, a.dim, a.noise, a.poorly_aligned, seed)
    };
    let enrolled = generate_synthetic(&synth(a.subjects, a.images, seed))?;
    let mut next_id = enrolled.len() as u64;
    let (mut gallery, probes) = match &a.probes_out {
        Some(_) => {
            if a.images < 2 {
                return Err(CliError::Usage(
                    "--probes-out needs --images of at least 2".into(),
                ));
            }
            let (probe_rows, gallery_rows): (Vec<usize>, Vec<usize>) =
                (0..enrolled.len()).partition(|r| r % a.images == 0);
            (
                enrolled.select(&gallery_rows)?,
                Some(enrolled.select(&probe_rows)?),
            )
        }
        None => (enrolled, None),
    };
    if a.distractors > 0 {
        let cfg = synth(a.distractors, 1, seed ^ DISTRACTOR_STREAM)
            .with_ids_from(next_id)
            .with_prefix("d");
        gallery.extend(&generate_synthetic(&cfg)?)?;
        next_id += a.distractors as u64;
    }
    at(&a.out, save_dataset(&gallery, &a.out))?;
    info!(
        "wrote {} gallery vectors to {}",
        gallery.len(),
        a.out.display()
    );
    match (probes, &a.probes_out) {
        (Some(mut probes), Some(path)) => {
            if a.strangers > 0 {
                let cfg = synth(a.strangers, 1, seed ^ STRANGER_STREAM)
                    .with_ids_from(next_id)
                    .with_prefix("u");
                probes.extend(&generate_synthetic(&cfg)?)?;
            }
            at(path, save_dataset(&probes, path))?;
            info!("wrote {} probe vectors to {}", probes.len(), path.display());
        }
        _ if a.strangers > 0 => {
            return Err(CliError::Usage("--strangers needs --probes-out".into()))
        }
        _ => {}
    }
    Ok(())
}

pub fn train_codebook(a: &TrainCodebookArgs, seed: u64) -> Res {
    let mut data = at(&a.input, load_dataset(&a.input))?;
    if let Some(n) = a.sample {
        data = data.prefix(n);
    }
    data.normalize_in_place()?;
    info!(
        "training m={} z={} on {} vectors of dim {}",
        a.m,
        a.z,
        data.len(),
        data.dim()
    );
    let codebook = train_codebooks(&data, a.m, a.z, a.iters, seed)?;
    at(&a.out, save_codebook(&codebook, &a.out))?;
    info!("wrote codebook to {}", a.out.display());
    Ok(())
}

pub fn build_index(a: &BuildIndexArgs) -> Res {
    let codebook = at(&a.codebook, load_codebook(&a.codebook))?;
    let data = at(&a.input, load_dataset(&a.input))?;
    let index = build_index_owned(data, &codebook, a.keep_raw)?;
    at(&a.out, save_index(&index, &a.out))?;
    info!(
        "wrote index of {} items to {}",
        index.len(),
        a.out.display()
    );
    Ok(())
}

pub fn search(a: &SearchArgs) -> Res {
    let metric: Metric = usage(&a.metric, "metric")?;
    let index = at(&a.index, load_index(&a.index))?;
    let mut queries = at(&a.query, load_dataset(&a.query))?;
    queries.normalize_in_place()?;
    let k = resolve_k(a.k, index.len());
    let lists = if a.exact {
        let raw = index.raw().ok_or(Error::MissingRawVectors)?;
        search_exact_batch(raw, &queries, k, metric)?
    } else {
        search_pq_batch(&index, &queries, k)?
    };
    write_results(&a.out, &queries, &lists, a.threshold)
}

pub fn cascade_search(a: &CascadeSearchArgs, seed: u64) -> Res {
    let strategy: FusionStrategy = usage(&a.strategy, "strategy")?;
    let index = at(&a.index, load_index(&a.index))?;
    let mut queries = at(&a.query, load_dataset(&a.query))?;
    queries.normalize_in_place()?;
    let k = resolve_k(a.k, index.len());
    if k < 2 {
        return Err(CliError::Usage(
            "cascade search needs --k of at least 2".into(),
        ));
    }
    info!(
        "cascade {} with k = {k} over {} gallery items",
        strategy.as_str(),
        index.len()
    );
    let table;
    let reference;
    let matcher: &dyn SlowMatcher = match &a.scores {
        Some(path) => {
            table = at(path, ScoreTableMatcher::load(path))?;
            &table
        }
        None => {
            reference = ReferenceSlowMatcher::new(&index, a.perturbation, seed)?
                .with_tail_dof(a.tail_dof)?;
            &reference
        }
    };
    let lists = cascade_search_batch(&index, matcher, &queries, k, strategy)?;
    write_results(&a.out, &queries, &lists, a.threshold)
}

fn read_manifest(vectors: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let path = manifest_path(vectors);
    let bytes = at(&path, fs::read(&path).map_err(Error::from))?;
    at(&path, decode_manifest(&bytes))
}

pub fn evaluate_results(a: &EvaluateArgs) -> Res {
    let file = at(&a.results, File::open(&a.results).map_err(Error::from))?;
    let lines = at(&a.results, read_results_jsonl(BufReader::new(file)))?;
    let probes: HashMap<u64, Option<String>> = read_manifest(&a.probes)?
        .into_iter()
        .map(|r| (r.id, r.subject))
        .collect();
    let gallery = read_manifest(&a.gallery)?;
    let ids: Vec<u64> = gallery.iter().map(|r| r.id).collect();
    let subjects: Vec<Option<String>> = gallery.into_iter().map(|r| r.subject).collect();
    let (genuine, impostor) = attach_ground_truth(&lines, &probes, &ids, &subjects)?;
    let cfg = EvalConfig {
        far_targets: a.far_targets.clone(),
        dir_ranks: a.ranks.clone(),
        cmc_max_rank: a.cmc_max_rank,
        pr_depth: a.pr_depth,
        sweep_points: a.sweep_points,
    };
    let report = evaluate(&genuine, &impostor, &cfg)?;
    info!(
        "{} genuine and {} impostor probes, mAP {:.4}",
        genuine.len(),
        impostor.len(),
        report.map
    );
    at(
        &a.out,
        fs::write(&a.out, report.to_json()?).map_err(Error::from),
    )?;
    if let Some(path) = &a.text {
        at(path, fs::write(path, report.to_text()).map_err(Error::from))?;
    }
    Ok(())
}

/// Benchmark configuration from the defaults, the flags, one seed and a thread count.
pub fn bench_config(a: &BenchArgs, seed: u64, threads: usize) -> Result<BenchConfig, CliError> {
    let mut cfg = BenchConfig {
        data_seed: seed,
        codebook_seed: seed.wrapping_add(1),
        matcher_seed: seed.wrapping_add(2),
        threads,
        ..BenchConfig::default()
    };
    macro_rules! set {
        ($($field:ident = $value:expr),* $(,)?) => {
            $(if let Some(v) = $value.clone() { cfg.$field = v; })*
        };
    }
    set!(
        distractor_counts = a.distractors,
        dim = a.dim,
        m = a.m,
        z = a.z,
        num_subjects = a.subjects,
        mates_per_subject = a.mates,
        within_class_noise = a.noise,
        poorly_aligned_fraction = a.poorly_aligned,
        train_size = a.train_size,
        kmeans_iters = a.iters,
        perturbation = a.perturbation,
        repetitions = a.repetitions,
        memory_limit_bytes = a.memory_limit,
    );
    if let Some(dof) = a.tail_dof {
        cfg.perturbation_tail_dof = dof.0;
    }
    if let Some(noise) = a.view_noise {
        cfg.slow_view_noise = noise.0;
    }
    cfg.candidate_sizes = match (&a.k_values, a.kind) {
        (Some(ks), _) => ks.clone(),
        (None, BenchKind::Scaling) => Vec::new(),
        (None, BenchKind::KSweep) => K_SWEEP_GRID.to_vec(),
    };
    if let Some(names) = &a.strategies {
        cfg.strategies = names
            .iter()
            .map(|s| usage::<BenchStrategy>(s, "strategies"))
            .collect::<Result<_, _>>()?;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn bench(a: &BenchArgs, cfg: &BenchConfig) -> Res {
    let report = match a.kind {
        BenchKind::Scaling => run_scaling_bench(cfg)?,
        BenchKind::KSweep => run_k_sweep(cfg)?,
    };
    at(
        &a.out,
        fs::write(&a.out, report.to_json()?).map_err(Error::from),
    )?;
    if let Some(path) = &a.csv {
        let mut out = BufWriter::new(at(path, File::create(path).map_err(Error::from))?);
        report.write_csv(&mut out)?;
        at(path, out.flush().map_err(Error::from))?;
    }
    info!("wrote benchmark report to {}", a.out.display());
    Ok(())
}
