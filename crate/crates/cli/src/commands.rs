use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use setvalued::classifiers::{brute_force_optimal, MAX_BRUTE_FORCE_CATEGORIES};
use setvalued::gaussian::{calibrate_conformal_cost, conformal_coverage};
use setvalued::synth::{generate, table1_preset, GeneratorConfig};
use setvalued::tuning::{grid_scan_ab, grid_scan_csv, make_weights, select_b_minimize, select_b_threshold};
use setvalued::{
    optimal_classifier, BGrid, BinaryReward, CVConfig, CategorySpace, FitParams, GaussianCategoryModel, LabeledDataset,
    LooPosteriors, NormalInverseWishart, PenaltySequence, PosteriorVector, RewardSpec, WeightScheme,
};

use crate::error::{CliError, CliResult};
use crate::io::{config_comment, csv_string, read_table, read_training, write_text, ModelFile};
use crate::{ClassifyArgs, ConformalArgs, FitArgs, GridScanArgs, SelfCheckArgs, SynthArgs, TuneArgs};

fn resolved<T: serde::Serialize>(command: &str, args: &T) -> Value {
    let mut value = serde_json::to_value(args).expect("arguments serialize");
    value["command"] = json!(command);
    value
}

fn parse_vector(name: &str, text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Incompatible(format!("--{name}: {x:?} is not a number")))
        })
        .collect()
}

/// Resolves `flat`, `prop` or an explicit vector into a normalized prior.
fn resolve_prior(text: &str, counts: &[usize]) -> CliResult<Vec<f64>> {
    let n = counts.len();
    let prior = match text {
        "flat" => vec![1.0 / n as f64; n],
        "prop" => {
            let total: usize = counts.iter().sum();
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        }
        _ => {
            let raw = parse_vector("prior", text)?;
            if raw.len() != n {
                return Err(CliError::Incompatible(format!(
                    "--prior has {} entries but the model has {n} categories",
                    raw.len()
                )));
            }
            let total: f64 = raw.iter().sum();
            if raw.iter().any(|p| p.is_nan() || *p < 0.0) || total.is_nan() || total <= 0.0 {
                return Err(CliError::Incompatible(
                    "--prior entries must be nonnegative with positive sum".into(),
                ));
            }
            raw.into_iter().map(|p| p / total).collect()
        }
    };
    setvalued::probability::validate_prior(&prior)?;
    Ok(prior)
}

fn parse_range(name: &str, text: &str) -> CliResult<(f64, f64, f64)> {
    let parts = parse_vector(name, &text.replace(':', ","))?;
    match parts[..] {
        [lo, hi, step] => Ok((lo, hi, step)),
        _ => Err(CliError::Incompatible(format!(
            "--{name} expects lo:hi:step, got {text:?}"
        ))),
    }
}

fn parse_b_grid(name: &str, text: &str) -> CliResult<BGrid> {
    let (lo, hi, step) = parse_range(name, text)?;
    Ok(BGrid::new(lo, hi, step)?)
}

/// Like [`parse_b_grid`] but `lo = 0` is allowed.
fn parse_a_grid(text: &str) -> CliResult<Vec<f64>> {
    let (lo, hi, step) = parse_range("a-grid", text)?;
    if lo == 0.0 {
        let mut points = vec![0.0];
        if hi >= step {
            points.extend(BGrid::new(step, hi, step)?.points()?);
        }
        Ok(points)
    } else {
        Ok(BGrid::new(lo, hi, step)?.points()?)
    }
}

fn format_table(rows: &[[String; 3]]) -> String {
    let widths: Vec<usize> = (0..3)
        .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    rows.iter()
        .map(|r| {
            format!(
                "{:<w0$}  {:<w1$}  {:>w2$}\n",
                r[0],
                r[1],
                r[2],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2]
            )
        })
        .collect()
}

fn load_dataset(path: &Path) -> CliResult<(Vec<String>, LabeledDataset)> {
    let (features, rows) = read_training(path)?;
    let dataset = LabeledDataset::from_rows(&rows).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    Ok((features, dataset))
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let (features, dataset) = load_dataset(&args.data)?;
    let hyperprior = NormalInverseWishart::default_for(&dataset.data)?;
    let model = GaussianCategoryModel::fit(&dataset.data, &hyperprior, args.draws, args.seed)?;
    let file = ModelFile {
        config: resolved("fit", args),
        features,
        labels: dataset.map.clone(),
        model: model.state().clone(),
    };
    write_text(&args.out, &serde_json::to_string_pretty(&file)?)?;

    let mut rows = vec![["label".to_string(), "block".to_string(), "count".to_string()]];
    for (i, label) in dataset.map.labels.iter().enumerate() {
        let block = if dataset.map.has_blocks() {
            dataset.map.blocks[dataset.space.block_of(i)?].clone()
        } else {
            "-".into()
        };
        rows.push([label.clone(), block, model.counts()[i].to_string()]);
    }
    rows.push(["total".into(), String::new(), dataset.data.total().to_string()]);
    print!("{}", format_table(&rows));
    Ok(())
}

fn parse_reward(text: &str) -> CliResult<RewardSpec> {
    let body = match text.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(CliError::io(format!("reading {path}")))?,
        None => text.to_string(),
    };
    serde_json::from_str(&body).map_err(|e| CliError::Incompatible(format!("--reward: {e}")))
}

pub fn classify(args: &ClassifyArgs) -> CliResult<()> {
    let (file, model) = ModelFile::load(&args.model)?;
    let space = file.labels.space()?;
    let spec = parse_reward(&args.reward)?;
    if matches!(spec, RewardSpec::Composite { .. }) && !file.labels.has_blocks() {
        return Err(CliError::Incompatible(
            "composite rewards need a model fitted on data with a block column".into(),
        ));
    }
    spec.validate(&space)?;
    for advisory in spec.advisories() {
        log::warn!("{advisory}");
    }
    if args.oracle {
        if space.num_categories() > MAX_BRUTE_FORCE_CATEGORIES {
            return Err(CliError::Incompatible(format!(
                "--oracle supports at most {MAX_BRUTE_FORCE_CATEGORIES} categories"
            )));
        }
        if matches!(spec, RewardSpec::IndifferenceZone { .. }) {
            return Err(CliError::Incompatible(
                "--oracle does not support indifference zone rewards".into(),
            ));
        }
    }
    let prior = resolve_prior(&args.prior, model.counts())?;
    let table = read_table(&args.data)?;
    if table.features.len() != model.dim() {
        return Err(CliError::Incompatible(format!(
            "dimension mismatch: model has {} features, {} has {}",
            model.dim(),
            args.data.display(),
            table.features.len()
        )));
    }
    if table.features != file.features {
        log::warn!(
            "feature names {:?} differ from the model's {:?}",
            table.features,
            file.features
        );
    }

    let labels = &file.labels.labels;
    let with_truth = table.rows.iter().any(|r| r.label.is_some());
    let mut header: Vec<String> = Vec::new();
    if with_truth {
        header.push("label".into());
    }
    header.extend(labels.iter().map(|l| format!("p_{l}")));
    header.extend(["set", "size", "value"].map(String::from));
    if args.oracle {
        header.push("oracle_value".into());
    }
    let mut out_rows = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let p = model.posterior_over_categories(&prior, &row.values, &space)?;
        let result = optimal_classifier(&spec, &p)?;
        let mut cells = Vec::with_capacity(header.len());
        if with_truth {
            cells.push(row.label.clone().unwrap_or_default());
        }
        cells.extend(p.probs().iter().map(f64::to_string));
        cells.push(
            result
                .set
                .iter()
                .map(|i| labels[i].as_str())
                .collect::<Vec<_>>()
                .join(";"),
        );
        cells.push(result.set.len().to_string());
        cells.push(result.value.to_string());
        if args.oracle {
            cells.push(brute_force_optimal(&spec, &p)?.value.to_string());
        }
        out_rows.push(cells);
    }
    let body = config_comment(&resolved("classify", args)) + &csv_string(&header, &out_rows)?;
    write_text(&args.out, &body)
}

fn dataset_posteriors(
    path: &Path,
    prior: &str,
    draws: usize,
    seed: u64,
    threads: Option<usize>,
) -> CliResult<(LabeledDataset, Vec<f64>, LooPosteriors)> {
    let (_, dataset) = load_dataset(path)?;
    let counts = dataset.data.counts();
    if let Some((i, &n)) = counts.iter().enumerate().find(|(_, &n)| n < 2) {
        return Err(CliError::CrossValidation(format!(
            "category {:?} has {n} observation(s); leave-one-out needs at least 2",
            dataset.map.labels[i]
        )));
    }
    let prior = resolve_prior(prior, &counts)?;
    let params = FitParams {
        hyperprior: None,
        draws,
        seed,
        threads,
    };
    let loo = LooPosteriors::compute(&dataset.data, &dataset.space, &prior, &params)?;
    Ok((dataset, prior, loo))
}

fn weight_inputs(scheme: &str, real_prior: Option<&str>) -> CliResult<(WeightScheme, Option<Vec<f64>>)> {
    let scheme: WeightScheme = scheme.parse()?;
    let real = real_prior.map(|t| parse_vector("real-prior", t)).transpose()?;
    if scheme == WeightScheme::Rarity && real.is_none() {
        return Err(setvalued::Error::MissingRealPrior.into());
    }
    Ok((scheme, real))
}

pub fn tune(args: &TuneArgs) -> CliResult<()> {
    if !(args.delta > 0.0 && args.delta <= 1.0) {
        return Err(CliError::Incompatible(format!("--delta {} outside (0, 1]", args.delta)));
    }
    let grid = parse_b_grid("grid", &args.grid)?;
    let (scheme, real_prior) = weight_inputs(&args.weights, args.real_prior.as_deref())?;
    let (dataset, _, loo) = dataset_posteriors(&args.data, &args.prior, args.draws, args.seed, args.threads)?;
    make_weights(scheme, loo.counts(), real_prior.as_deref())?;
    let config = resolved("tune", args);
    let mut summary = Vec::new();

    for &epsilon in &args.epsilons {
        let mut selections = Vec::new();
        let mut curve = None;
        for variant in BinaryReward::ALL {
            let cv = CVConfig {
                epsilon,
                delta: args.delta,
                weights: scheme,
                real_prior: real_prior.clone(),
                variant,
                grid,
                fit: FitParams {
                    hyperprior: None,
                    draws: args.draws,
                    seed: args.seed,
                    threads: args.threads,
                },
            };
            let outcome = if variant.is_monotone() {
                select_b_threshold(&cv, &loo)
            } else {
                select_b_minimize(&cv, &loo)
            };
            match outcome {
                Ok(report) => {
                    summary.push(format!(
                        "epsilon {epsilon} {variant}: b = {} (non-reward rate {})",
                        report.selection.display_b(),
                        report.selection.non_reward_rate()
                    ));
                    selections.push(json!({
                        "variant": variant.to_string(),
                        "selection": report.selection,
                        "b_display": report.selection.display_b(),
                    }));
                    curve.get_or_insert(report.curve_csv());
                }
                Err(setvalued::Error::NoFeasibleB { delta }) => {
                    summary.push(format!(
                        "epsilon {epsilon} {variant}: no grid b reaches non-reward rate {delta}"
                    ));
                    selections.push(json!({
                        "variant": variant.to_string(),
                        "error": format!("no grid value of b reaches non-reward rate <= {delta}"),
                    }));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let weights = make_weights(scheme, loo.counts(), real_prior.as_deref())?;
        let curve = match curve {
            Some(c) => c,
            None => setvalued::tuning::curve_csv(&loo.curve(epsilon, &grid, &weights)?),
        };
        let report = json!({
            "config": config,
            "labels": dataset.map.labels,
            "epsilon": epsilon,
            "delta": args.delta,
            "weight_scheme": scheme.name(),
            "weights": weights,
            "prior": args.prior,
            "seed": args.seed,
            "selections": selections,
        });
        write_text(
            &args.out_dir.join(format!("curve_eps{epsilon}.csv")),
            &(config_comment(&config) + &curve),
        )?;
        write_text(
            &args.out_dir.join(format!("selection_eps{epsilon}.json")),
            &(serde_json::to_string_pretty(&report)? + "\n"),
        )?;
    }
    for line in summary {
        println!("{line}");
    }
    Ok(())
}

pub fn conformal(args: &ConformalArgs) -> CliResult<()> {
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(CliError::Incompatible(format!("--delta {} outside (0, 1)", args.delta)));
    }
    let (file, model) = ModelFile::load(&args.model)?;
    let space = CategorySpace::single_block(model.num_categories())?;
    let prior = resolve_prior(&args.prior, model.counts())?;
    let cost = calibrate_conformal_cost(&model, &prior, &space, args.delta, args.samples, args.seed)?;
    let mut report = json!({
        "config": resolved("conformal", args),
        "labels": file.labels.labels,
        "delta": args.delta,
        "cost": cost,
    });
    if args.audit {
        let audit_seed = setvalued::gaussian::derive_seed(args.seed, 1);
        report["coverage"] = json!(conformal_coverage(
            &model,
            &prior,
            &space,
            cost,
            args.samples,
            audit_seed
        )?);
    }
    let body = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(path) => write_text(path, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let config: GeneratorConfig = match (&args.preset, &args.config) {
        (Some(name), None) if name == "table1" => table1_preset(),
        (Some(name), None) => return Err(CliError::Incompatible(format!("unknown preset {name:?}"))),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Schema(format!("{}: invalid generator config: {e}", path.display())))?
        }
        _ => {
            return Err(CliError::Incompatible(
                "pass exactly one of --preset or --config".into(),
            ))
        }
    };
    let rows = generate(&config, args.seed).map_err(|e| CliError::Schema(format!("generator config: {e}")))?;
    let with_blocks = rows.first().is_some_and(|r| r.block.is_some());
    let mut header = config.feature_names();
    header.push("label".into());
    if with_blocks {
        header.push("block".into());
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells: Vec<String> = r.features.iter().map(f64::to_string).collect();
            cells.push(r.label.clone());
            cells.extend(r.block.clone());
            cells
        })
        .collect();
    let mut meta = resolved("synth", args);
    meta["generator"] = serde_json::to_value(&config)?;
    write_text(&args.out, &(config_comment(&meta) + &csv_string(&header, &cells)?))?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

pub fn grid_scan(args: &GridScanArgs) -> CliResult<()> {
    let a_grid = parse_a_grid(&args.a_grid)?;
    let b_grid = parse_b_grid("b-grid", &args.b_grid)?.points()?;
    let variant: BinaryReward = args.variant.parse()?;
    let (scheme, real_prior) = weight_inputs(&args.weights, args.real_prior.as_deref())?;
    let (_, _, loo) = dataset_posteriors(&args.data, &args.prior, args.draws, args.seed, args.threads)?;
    let weights = make_weights(scheme, loo.counts(), real_prior.as_deref())?;
    let lattice = grid_scan_ab(&loo, &a_grid, &b_grid, &weights, variant)?;
    let body = config_comment(&resolved("grid-scan", args)) + &grid_scan_csv(&a_grid, &b_grid, &lattice);
    write_text(&args.out, &body)
}

fn random_spec(family: usize, n: usize, rng: &mut ChaCha8Rng) -> CliResult<RewardSpec> {
    Ok(match family {
        0 => RewardSpec::Map,
        1 => {
            let mut steps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.2)).collect();
            steps.sort_by(f64::total_cmp);
            let g = std::iter::once(0.0)
                .chain(steps.iter().scan(0.0, |acc, s| {
                    *acc += s;
                    Some(*acc)
                }))
                .collect();
            RewardSpec::Penalty(PenaltySequence::convex(g)?)
        }
        2 => RewardSpec::Penalty(PenaltySequence::general(
            (0..=n).map(|_| rng.random_range(0.0..1.0)).collect(),
        )?),
        3 => RewardSpec::Proportion {
            c: rng.random_range(0.0..1.0),
        },
        4 => {
            let lower = 1.0 / n as f64;
            RewardSpec::Ripley {
                r: lower + (1.0 - lower) * rng.random_range(0.001..0.999),
            }
        }
        _ => RewardSpec::Composite {
            a: rng.random_range(0.0..1.0),
            b: rng.random_range(0.0..1.0),
        },
    })
}

pub fn self_check(args: &SelfCheckArgs) -> CliResult<()> {
    if !(2..=MAX_BRUTE_FORCE_CATEGORIES).contains(&args.max_categories) {
        return Err(CliError::Incompatible(format!(
            "--max-categories must lie in 2..={MAX_BRUTE_FORCE_CATEGORIES}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..args.instances {
        let n = rng.random_range(2..=args.max_categories);
        let k = rng.random_range(1..=4.min(n));
        let mut cuts: Vec<usize> = rand::seq::index::sample(&mut rng, n - 1, k - 1)
            .into_iter()
            .map(|c| c + 1)
            .chain([0, n])
            .collect();
        cuts.sort_unstable();
        let sizes: Vec<usize> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        let p = PosteriorVector::new(
            raw.iter().map(|x| x / total).collect(),
            CategorySpace::from_block_sizes(&sizes)?,
        )?;
        let spec = random_spec(rng.random_range(0..6), n, &mut rng)?;
        let fast = optimal_classifier(&spec, &p)?.value;
        let exhaustive = brute_force_optimal(&spec, &p)?.value;
        let gap = (fast - exhaustive).abs();
        worst = worst.max(gap);
        if gap > 1e-12 {
            mismatches += 1;
            log::error!(
                "{} reward on {:?}: closed form {fast}, exhaustive {exhaustive}",
                spec.name(),
                p.probs()
            );
        }
    }
    println!(
        "{} instances, {mismatches} mismatches, largest value gap {worst:e}",
        args.instances
    );
    if mismatches > 0 {
        return Err(CliError::Other(format!(
            "{mismatches} instances disagree with exhaustive search"
        )));
    }
    Ok(())
}
