//! Command implementations. Every command is deterministic given its inputs,
//! config, and seed; outputs are written atomically (.partial then rename).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use intentforge_core::baselines::{compare, comparison_to_csv, comparison_to_text, train_logreg};
use intentforge_core::metrics::{
    confusion, report, report_to_csv, roc_auc, roc_to_csv, sweep, sweep_to_csv,
};
use intentforge_core::nn::model::init_params;
use intentforge_core::persist::{
    atomic_write, load_checkpoint, load_split, save_checkpoint, save_split,
};
use intentforge_core::pipeline::{
    class_weights, parse_events, prepare_dataset, sessionize, truncate_at_purchase, FeatureMatrix,
    ParseOutcome,
};
use intentforge_core::synth::{bayes_auc, generate};
use intentforge_core::trainer::{history_to_csv, predict_probs, train_into, Checkpoint};

use crate::config::RunConfig;

fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<()> {
    config.require_seed()?;
    ensure_out_dir(out)?;
    let generated = generate(&config.generator)?;
    atomic_write(&out.join("events.csv"), &generated.csv_bytes)?;
    atomic_write(
        &out.join("truth.json"),
        &serde_json::to_vec_pretty(&generated.truth)?,
    )?;
    let bayes = bayes_auc(&generated.truth)
        .map(|a| format!("{a:.4}"))
        .unwrap_or_else(|_| "n/a (single class)".to_string());
    println!(
        "generate: {} sessions, realized positive rate {:.4} (target {:.4}), bayes auc {}",
        generated.n_sessions, generated.realized_rate, config.generator.target_positive_rate, bayes
    );
    println!(
        "generate: wrote {} and {}",
        out.join("events.csv").display(),
        out.join("truth.json").display()
    );
    Ok(())
}

fn read_events(input: &Path) -> Result<ParseOutcome> {
    let file = fs::File::open(input)
        .with_context(|| format!("cannot open input file {}", input.display()))?;
    Ok(parse_events(std::io::BufReader::new(file))?)
}

pub fn cmd_prepare(input: &Path, config: &RunConfig, out: &Path) -> Result<()> {
    config.require_seed()?;
    if input.starts_with(out) || out.starts_with(input) {
        bail!(
            "input {} and output directory {} would collide",
            input.display(),
            out.display()
        );
    }
    ensure_out_dir(out)?;

    let outcome = read_events(input)?;
    if !outcome.errors.is_empty() {
        let mut csv = String::from("line,message\n");
        for e in &outcome.errors {
            csv.push_str(&format!("{},{:?}\n", e.line, e.message));
        }
        write_text(&out.join("parse_errors.csv"), &csv)?;
        println!(
            "prepare: {} malformed rows reported in parse_errors.csv",
            outcome.errors.len()
        );
    }
    let sessions = sessionize(outcome.events)?;
    let (split, schema, exclusions) = prepare_dataset(sessions, &config.pipeline)?;

    save_split(out, &split, &schema)?;
    let mut csv = String::from("session_id,user_id,label\n");
    for e in &exclusions.excluded {
        csv.push_str(&format!("{},{},{}\n", e.session_id, e.user_id, e.label));
    }
    write_text(&out.join("exclusions.csv"), &csv)?;

    println!(
        "prepare: state_size {}, mode {}, schema digest {}",
        schema.state_size,
        schema.mode.as_str(),
        &split.train.schema_digest[..12]
    );
    println!(
        "prepare: sessions train/val/test {}/{}/{}, excluded {} empty-after-truncation (of {})",
        split.train.n_sessions(),
        split.validation.n_sessions(),
        split.test.n_sessions(),
        exclusions.excluded.len(),
        exclusions.sessions_before
    );
    println!(
        "prepare: positive rate train {:.4} val {:.4} test {:.4}",
        split.train.positive_rate(),
        split.validation.positive_rate(),
        split.test.positive_rate()
    );
    Ok(())
}

pub fn cmd_train(split_dir: &Path, config: &RunConfig, out: &Path) -> Result<()> {
    let seed = config.require_seed()?;
    ensure_out_dir(out)?;
    let (split, schema) = load_split(split_dir)?;
    let t = &config.train;
    println!(
        "train: lr={} batch={} epochs={} patience={}",
        t.learning_rate, t.batch_size, t.max_epochs, t.patience
    );
    println!(
        "train: dropout={} epsilon={}->{} sigma={} replay={} exploration={} class_weights={} seed={}",
        t.dropout_rate,
        t.epsilon_start,
        t.epsilon_end,
        t.noise_sigma,
        t.replay_enabled,
        t.exploration_enabled,
        t.use_class_weights,
        seed
    );

    let params = init_params(schema.state_size, seed)?;
    let mut history = Vec::new();
    let result = train_into(t, &split, params, &mut history);
    // Partial history is still written when training aborts.
    write_text(&out.join("history.csv"), &history_to_csv(&history))?;
    let checkpoint = result?;
    save_checkpoint(&out.join("checkpoint.ifck"), &checkpoint, &schema)?;
    println!(
        "train: best epoch {} val_loss {:.6}, {} epochs run",
        checkpoint.best_epoch,
        checkpoint.val_loss,
        history.len()
    );
    println!("train: wrote {}", out.join("checkpoint.ifck").display());
    Ok(())
}

fn select_part<'a>(
    split: &'a intentforge_core::pipeline::DatasetSplit,
    part: &str,
) -> Result<&'a FeatureMatrix> {
    match part {
        "train" => Ok(&split.train),
        "validation" | "val" => Ok(&split.validation),
        "test" => Ok(&split.test),
        other => bail!("unknown split part {other:?}, expected train, validation, or test"),
    }
}

fn load_scored(
    checkpoint_path: &Path,
    split_dir: &Path,
    part: &str,
) -> Result<(Checkpoint, FeatureMatrix, Vec<f64>)> {
    let (checkpoint, _) = load_checkpoint(checkpoint_path)?;
    let (split, _) = load_split(split_dir)?;
    let matrix = select_part(&split, part)?.clone();
    if checkpoint.schema_digest != matrix.schema_digest {
        bail!(
            "incompatible artifacts: checkpoint schema {} vs split schema {}",
            checkpoint.schema_digest,
            matrix.schema_digest
        );
    }
    let probs = predict_probs(&checkpoint.params, &matrix)?;
    Ok((checkpoint, matrix, probs))
}

pub fn cmd_evaluate(
    checkpoint_path: &Path,
    split_dir: &Path,
    config: &RunConfig,
    threshold_flag: Option<f64>,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let threshold = threshold_flag.unwrap_or(config.evaluate.threshold);
    let part = &config.evaluate.part;
    let (_, matrix, probs) = load_scored(checkpoint_path, split_dir, part)?;

    let cm = confusion(&probs, &matrix.labels, threshold)?;
    let rep = report(&cm)?;
    let curve = roc_auc(&probs, &matrix.labels)?;

    println!(
        "evaluate: part {part}, threshold {threshold}, {} sessions",
        matrix.n_sessions()
    );
    println!("class,precision,recall,f1,support");
    for (class, m) in [(0, &rep.class0), (1, &rep.class1)] {
        println!(
            "{class},{:.4},{:.4},{:.4},{}",
            m.precision, m.recall, m.f1, m.support
        );
    }
    println!("accuracy {:.4}, auc_roc {:.4}", rep.accuracy, curve.auc);
    println!(
        "confusion: tn {} fp {} fn {} tp {}",
        cm.tn, cm.fp, cm.fn_, cm.tp
    );

    write_text(&out.join("report.csv"), &report_to_csv(&rep))?;
    let doc = serde_json::json!({
        "part": part,
        "threshold": threshold,
        "confusion": cm,
        "report": rep,
        "auc_roc": curve.auc,
    });
    write_text(
        &out.join("report.json"),
        &serde_json::to_string_pretty(&doc)?,
    )?;
    write_text(&out.join("roc.csv"), &roc_to_csv(&curve))?;
    Ok(())
}

pub fn cmd_sweep(
    checkpoint_path: &Path,
    split_dir: &Path,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let part = &config.evaluate.part;
    let (_, matrix, probs) = load_scored(checkpoint_path, split_dir, part)?;
    let table = sweep(&probs, &matrix.labels, &config.evaluate.sweep_thresholds)?;
    let csv = sweep_to_csv(&table);
    print!("{csv}");
    write_text(&out.join("sweep.csv"), &csv)?;
    println!("sweep: {} thresholds on part {part}", table.rows.len());
    Ok(())
}

pub fn cmd_compare(
    checkpoint_path: &Path,
    plain_checkpoint_path: &Path,
    split_dir: &Path,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let (checkpoint, _) = load_checkpoint(checkpoint_path)?;
    let (plain, _) = load_checkpoint(plain_checkpoint_path)?;
    let (split, _) = load_split(split_dir)?;

    let weights = class_weights(&split.train.labels)?;
    let logreg = train_logreg(
        &split,
        config.evaluate.logreg_learning_rate,
        config.evaluate.logreg_epochs,
        weights,
        config.evaluate.logreg_l2,
        config.seed.unwrap_or(0),
    )?;

    let matrix = select_part(&split, &config.evaluate.part)?;
    let table = compare(
        &checkpoint,
        &logreg,
        &plain,
        matrix,
        &config.evaluate.compare_thresholds,
    )?;
    print!("{}", comparison_to_text(&table));
    write_text(&out.join("compare.csv"), &comparison_to_csv(&table))?;
    Ok(())
}

pub fn cmd_predict(checkpoint_path: &Path, input: &Path, out: &Path) -> Result<()> {
    if input == out.join("predictions.csv") {
        bail!(
            "input {} would be overwritten by the output",
            input.display()
        );
    }
    ensure_out_dir(out)?;
    let (checkpoint, schema) = load_checkpoint(checkpoint_path)?;
    let outcome = read_events(input)?;
    if !outcome.errors.is_empty() {
        println!("predict: skipped {} malformed rows", outcome.errors.len());
    }
    let sessions = sessionize(outcome.events)?;
    let mut kept = Vec::new();
    let mut skipped = 0usize;
    for session in sessions {
        let truncated = truncate_at_purchase(session);
        if truncated.events.is_empty() {
            skipped += 1;
        } else {
            kept.push(truncated);
        }
    }
    let matrix = intentforge_core::pipeline::featurize_matrix(&kept, &schema, schema.mode)?;
    let probs = predict_probs(&checkpoint.params, &matrix)?;

    let mut csv = String::from("session_id,probability\n");
    for (id, p) in matrix.session_ids.iter().zip(&probs) {
        csv.push_str(&format!("{id},{p:.6}\n"));
    }
    write_text(&out.join("predictions.csv"), &csv)?;
    println!(
        "predict: scored {} sessions ({} empty after truncation), wrote {}",
        matrix.n_sessions(),
        skipped,
        out.join("predictions.csv").display()
    );
    Ok(())
}
