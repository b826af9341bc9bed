use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use psdc_core::ablation::{run_ablation, write_ablation_csv, AblationConfig, Scenario};
use psdc_core::affinity::{affinity_group, group_by_label};
use psdc_core::dataset::{
    corrupt_labels, generate_synthetic, load_dataset, load_predictions, make_transition, save_dataset, Dataset,
    NoiseType, SyntheticSpec,
};
use psdc_core::selection::{
    ce_select, class_row_sums, clean_anchors_from_truth, evaluate_partition, gmm_raw_select, hybrid_select,
    jsd_select, kmeans_select, psdc_select, Method, Partition, SelectConfig,
};
use psdc_core::semiloop::{fit_prototypes, run_loop, LoopConfig};
use psdc_core::theory::{verify_theorem1, verify_theorem2};

use crate::{Global, MethodArg, NoiseArg, SpecArgs};

pub enum Outcome {
    Ok,
    AssertionFailed,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long, value_enum, default_value = "psdc")]
    pub method: MethodArg,
    /// Posterior threshold for the clean set
    #[arg(long, visible_alias = "d-cutoff", default_value_t = 0.9)]
    pub cutoff: f64,
    /// Predictions CSV (`id,p0,...`) for jsd, ce and hybrid. When absent,
    /// predictions come from class prototypes fit on the noisy labels.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Where to write the selection report [default: <output>.report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write each class's affinity matrix as CSV into this directory
    #[arg(long)]
    pub dump_affinity: Option<PathBuf>,
    /// Truly clean anchors per class for kmeans
    #[arg(long, default_value_t = 3)]
    pub anchors: usize,
    /// Prototype temperature when predictions are computed
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// Class count; inferred from the labels when absent
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// 1: row-sum ordering (Monte Carlo); 2: divergence ordering (closed form)
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub theorem: u8,
    #[arg(long, value_enum, default_value = "uniform")]
    pub noise: NoiseArg,
    #[arg(long, value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Monte Carlo trials for theorem 1
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
    #[arg(long, visible_alias = "d-cutoff", default_value_t = 0.9)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 30.0)]
    pub lambda_u: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_r: f64,
    #[arg(long, default_value_t = 0.025)]
    pub lambda_c: f64,
    #[arg(long, default_value_t = 0.05)]
    pub kappa: f64,
    #[arg(long, default_value_t = 4.0)]
    pub beta: f64,
    /// Rounds that use the hybrid JSD fallback
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// Held-out dataset CSV for final accuracy
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// Per-round CSV [default: <output>.rounds.csv]
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
}

fn input(g: &Global) -> Result<&Path> {
    g.input.as_deref().context("missing -i/--input")
}

fn output(g: &Global) -> Result<&Path> {
    g.output.as_deref().context("missing -o/--output")
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn guard(paths: &[&Path], force: bool) -> Result<()> {
    for p in paths {
        if p.as_os_str().is_empty() {
            bail!("empty output path");
        }
        if p.exists() && !force {
            bail!("refusing to overwrite {}; pass --force", p.display());
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut s = text.to_string();
    if !s.ends_with('\n') {
        s.push('\n');
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn spec_from(args: &SpecArgs, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        k: args.k,
        dim: args.dim,
        per_class: args.per_class,
        separation: args.separation,
        sigma: args.sigma,
        seed,
    }
}

pub fn generate(g: &Global, args: &SpecArgs) -> Result<Outcome> {
    let out = output(g)?;
    guard(&[out], g.force)?;
    let d = generate_synthetic(&spec_from(args, g.seed))?;
    save_dataset(&d, out)?;
    log::info!("wrote {} samples to {}", d.len(), out.display());
    Ok(Outcome::Ok)
}

pub fn corrupt(g: &Global, noise: NoiseType, rate: f64, transition: Option<PathBuf>) -> Result<Outcome> {
    let (inp, out) = (input(g)?, output(g)?);
    let tpath = transition.unwrap_or_else(|| sibling(out, "transition.json"));
    guard(&[out, &tpath], g.force)?;
    let d = load_dataset(inp, None)?;
    let t = make_transition(noise, rate, d.k())?;
    let c = corrupt_labels(&d, &t, g.seed)?;
    save_dataset(&c, out)?;
    t.save(&tpath)?;
    if let Some(f) = c.noise_fraction() {
        log::info!("realized noise fraction {f:.4}");
    }
    Ok(Outcome::Ok)
}

fn predictions_for(d: &Dataset, args: &SelectArgs) -> Result<Vec<Vec<f64>>> {
    match &args.predictions {
        Some(p) => Ok(load_predictions(p, d.ids(), d.k())?),
        None => {
            log::info!("no predictions given; using prototypes of the noisy labels");
            let m = fit_prototypes(d.features(), d.noisy_labels(), None, d.k(), args.temperature, None)?;
            Ok(m.predict_all(d.features())?)
        }
    }
}

fn dump_affinity(d: &Dataset, dir: &Path, force: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    for grp in group_by_label(d.noisy_labels()).into_iter().filter(|g| g.members.len() >= 2) {
        let path = dir.join(format!("class_{}.csv", grp.class_id));
        guard(&[&path], force)?;
        let a = affinity_group(d.features(), Some(d.ids()), grp.class_id, &grp.members)?;
        let mut w = BufWriter::new(File::create(&path)?);
        a.write_csv(d.ids(), &mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn select(g: &Global, args: &SelectArgs) -> Result<Outcome> {
    let (inp, out) = (input(g)?, output(g)?);
    let report_path = args.report.clone().unwrap_or_else(|| sibling(out, "report.json"));
    guard(&[out, &report_path], g.force)?;
    let d = load_dataset(inp, args.k)?;
    // selection never sees the ground truth
    let view = d.without_true_labels();
    let cfg = SelectConfig::with_cutoff(args.cutoff);
    cfg.validate()?;
    if let Some(dir) = &args.dump_affinity {
        dump_affinity(&view, dir, g.force)?;
    }
    let labels = view.noisy_labels();
    let partition: Partition = match Method::from(args.method) {
        Method::Psdc => psdc_select(&view, view.features(), &cfg)?,
        Method::Jsd => jsd_select(&predictions_for(&view, args)?, labels, &cfg)?,
        Method::Ce => ce_select(&predictions_for(&view, args)?, labels, &cfg)?,
        Method::Hybrid => {
            let p = psdc_select(&view, view.features(), &cfg)?;
            let j = jsd_select(&predictions_for(&view, args)?, labels, &cfg)?;
            hybrid_select(&p, &j)?
        }
        Method::GmmRaw => gmm_raw_select(&view, view.features(), &cfg)?,
        Method::Kmeans => {
            let anchors = clean_anchors_from_truth(&d, args.anchors)
                .context("kmeans needs ground-truth labels to pick clean anchors")?;
            kmeans_select(&class_row_sums(&view, view.features())?, &anchors, view.len())?
        }
    };
    partition.save(d.ids(), out)?;
    if d.true_labels().is_some() {
        let report = evaluate_partition(&partition, &d)?;
        write_text(&report_path, &serde_json::to_string_pretty(&report)?)?;
        println!(
            "{}: clean {} noisy {} purity {:.4} recall {:.4}",
            partition.method,
            report.clean_size,
            report.noisy_size,
            report.clean_purity,
            report.clean_recall
        );
    } else {
        log::warn!("no ground truth in {}; report not written", inp.display());
        println!(
            "{}: clean {} noisy {}",
            partition.method,
            partition.clean().len(),
            partition.noisy().len()
        );
    }
    Ok(Outcome::Ok)
}

pub fn evaluate(g: &Global, partition: &Path) -> Result<Outcome> {
    let d = load_dataset(input(g)?, None)?;
    let p = Partition::load(d.ids(), partition)?;
    let report = serde_json::to_string_pretty(&evaluate_partition(&p, &d)?)?;
    match &g.output {
        Some(out) => {
            guard(&[out], g.force)?;
            write_text(out, &report)?;
        }
        None => println!("{report}"),
    }
    Ok(Outcome::Ok)
}

pub fn verify(g: &Global, args: &VerifyArgs) -> Result<Outcome> {
    if let Some(out) = &g.output {
        guard(&[out], g.force)?;
    }
    let noise = NoiseType::from(args.noise);
    let mut failed = false;
    let json = if args.theorem == 2 {
        let reports = verify_theorem2(noise, &args.rates, args.spec.k)?;
        for r in &reports {
            let observed = if r.ordering_holds { "holds" } else { "fails" };
            let gaps: Vec<String> = r.off_diagonal_gaps.iter().map(|v| format!("{v:.6}")).collect();
            match r.expected_ordering {
                Some(expected) => {
                    let ok = expected == r.ordering_holds;
                    failed |= !ok;
                    println!(
                        "{} theorem 2 {noise} r={}: ordering {observed} (expected {}); jsd_clean {:.6} min jsd_noisy {:.6}; gaps [{}]",
                        if ok { "PASS" } else { "FAIL" },
                        r.rate,
                        if expected { "holds" } else { "fails" },
                        r.jsd_clean,
                        r.min_noisy,
                        gaps.join(", ")
                    );
                }
                None => println!(
                    "INFO theorem 2 {noise} r={}: ordering {observed} (not asserted); gaps [{}]",
                    r.rate,
                    gaps.join(", ")
                ),
            }
        }
        serde_json::to_string_pretty(&reports)?
    } else {
        let spec = spec_from(&args.spec, g.seed);
        let mut reports = Vec::new();
        for &rate in &args.rates {
            let t = make_transition(noise, rate, spec.k)?;
            let r = verify_theorem1(&spec, &t, args.trials, g.seed)?;
            let ok = r.vacuous || r.submerged || r.ordering_holds;
            failed |= !ok;
            let mu_q = r.mu_q.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            println!(
                "{} theorem 1 {noise} r={rate}: mu_p {:.4} mu_q {mu_q} submerged {} ordering {}{}; max variance share {:.4}",
                if ok { "PASS" } else { "FAIL" },
                r.mu_p,
                r.submerged,
                r.ordering_holds,
                if r.vacuous { " (vacuous)" } else { "" },
                r.max_single_variance_share
            );
            reports.push(r);
        }
        serde_json::to_string_pretty(&reports)?
    };
    if let Some(out) = &g.output {
        write_text(out, &json)?;
    }
    Ok(if failed { Outcome::AssertionFailed } else { Outcome::Ok })
}

pub fn train(g: &Global, args: &TrainArgs) -> Result<Outcome> {
    let (inp, out) = (input(g)?, output(g)?);
    let csv_path = args.csv.clone().unwrap_or_else(|| sibling(out, "rounds.csv"));
    guard(&[out, &csv_path], g.force)?;
    let d = load_dataset(inp, args.k)?;
    let holdout = args
        .holdout
        .as_ref()
        .map(|p| load_dataset(p, Some(d.k())))
        .transpose()?;
    let cfg = LoopConfig {
        rounds: args.rounds,
        d_cutoff: args.cutoff,
        lambda_u: args.lambda_u,
        lambda_r: args.lambda_r,
        lambda_c: args.lambda_c,
        kappa: args.kappa,
        beta_param: args.beta,
        warmup_rounds: args.warmup,
        temperature: args.temperature,
        seed: g.seed,
        model_seeds: None,
    };
    let report = run_loop(&d, &cfg, holdout.as_ref())?;
    report.save(out, &csv_path)?;
    for r in &report.rounds {
        println!(
            "round {}: {} purity {:.4} recall {:.4} clean {} loss {:.4}",
            r.round, r.method, r.clean_purity, r.clean_recall, r.clean_size, r.total_loss
        );
    }
    if let Some(a) = report.test_accuracy {
        println!("holdout accuracy {a:.4}");
    }
    Ok(Outcome::Ok)
}

pub fn ablate(g: &Global, spec: &SpecArgs, noise: NoiseType, rates: &[f64], cutoff: f64, anchors: usize) -> Result<Outcome> {
    let out = output(g)?;
    guard(&[out], g.force)?;
    let scenarios: Vec<Scenario> = rates.iter().map(|&rate| Scenario { noise_type: noise, rate }).collect();
    let cfg = AblationConfig {
        select: SelectConfig::with_cutoff(cutoff),
        anchors_per_class: anchors,
        noise_seed: g.seed,
        ..AblationConfig::default()
    };
    let rows = run_ablation(&spec_from(spec, g.seed), &scenarios, &cfg)?;
    let mut w = BufWriter::new(File::create(out)?);
    write_ablation_csv(&rows, &mut w)?;
    w.flush()?;
    for r in &rows {
        println!("{} r={} {:<8} purity {:.4} recall {:.4}", r.noise_type, r.rate, r.method, r.clean_purity, r.clean_recall);
    }
    Ok(Outcome::Ok)
}
