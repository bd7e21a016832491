use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use spikedec::bench::{run_bench, BenchReport};
use spikedec::data::{load_recording, save_csv, save_ndr, split, synth_reaching, windows, Recording, SplitSpec, SynthParams};
use spikedec::model::{load, save, Model, ModelConfig};
use spikedec::numerics::{Rng, Tensor};
use spikedec::stream::{stream_init, stream_latency, stream_push};
use spikedec::train::{fit_with, write_history, TrainConfig};

use crate::{BenchArgs, EvalArgs, FitArgs, ModelArgs, StreamArgs, SweepArgs, SynthArgs, TrainArgs, UsageError};

fn load_rec(path: &Path) -> Result<Recording> {
    load_recording(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// `train.ndr` (or `.csv`) inside a data directory.
fn part_path(dir: &Path, part: &str) -> PathBuf {
    let ndr = dir.join(format!("{part}.ndr"));
    let csv = dir.join(format!("{part}.csv"));
    if !ndr.exists() && csv.exists() {
        csv
    } else {
        ndr
    }
}

fn model_config(m: &ModelArgs, channels: usize, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::preset(m.track, m.recurrence);
    if let Some(h) = m.hidden {
        cfg.hidden_size = h;
    }
    cfg.input_channels = channels;
    cfg.seed = seed;
    cfg
}

fn train_config(f: &FitArgs) -> TrainConfig {
    TrainConfig {
        lr: f.lr,
        epochs: f.epochs,
        batch_size: f.batch_size,
        seed: f.seed,
        early_stop_patience: f.patience,
        ..TrainConfig::default()
    }
}

fn fit_logged(model: &Model, train: &Recording, val: &Recording, cfg: &TrainConfig) -> Result<(Model, Vec<spikedec::train::EpochRecord>)> {
    let (best, history) = fit_with(model, train, val, cfg, |r| {
        eprintln!("epoch {:>3}  loss {:.5}  val r2 {:.4}", r.epoch, r.train_loss, r.val_r2);
    })?;
    Ok((best, history))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (train_path, val_path) = match (&a.train, &a.val, &a.data) {
        (Some(t), Some(v), _) => (t.clone(), v.clone()),
        (t, v, Some(dir)) => (
            t.clone().unwrap_or_else(|| part_path(dir, "train")),
            v.clone().unwrap_or_else(|| part_path(dir, "val")),
        ),
        _ => return Err(UsageError("pass --data DIR or both --train and --val".into()).into()),
    };
    let train = load_rec(&train_path)?;
    let val = load_rec(&val_path)?;
    if train.channels != val.channels {
        anyhow::bail!(spikedec::Error::Config(format!(
            "train has {} channels but val has {}",
            train.channels, val.channels
        )));
    }
    let model = Model::new(model_config(&a.model, train.channels, a.fit.seed))?;
    let cfg = train_config(&a.fit);
    eprintln!(
        "training {} {} ({} parameters) on {} bins",
        a.model.track,
        a.model.recurrence,
        model.param_count(),
        train.len()
    );
    let (best, history) = fit_logged(&model, &train, &val, &cfg)?;
    save(&best, &a.out).with_context(|| format!("writing checkpoint {}", a.out.display()))?;
    if let Some(h) = &a.history {
        write_history(h, &history)?;
    }
    let best_r2 = history.iter().map(|r| r.val_r2).fold(f64::NEG_INFINITY, f64::max);
    println!("best val r2 {best_r2:.4} after {} epochs", history.len());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let rec = load_rec(&a.data)?;
    if rec.channels != model.config.input_channels {
        anyhow::bail!(spikedec::Error::Config(format!(
            "recording has {} channels, model expects {}",
            rec.channels, model.config.input_channels
        )));
    }
    let wins = windows(&rec, model.config.seq_len)?;
    if wins.is_empty() {
        anyhow::bail!(spikedec::Error::Config(format!(
            "recording of {} bins holds no {}-bin window",
            rec.len(),
            model.config.seq_len
        )));
    }
    let mut pred = Vec::new();
    let mut target = Vec::new();
    let mut writer = match &a.out {
        Some(p) => {
            let mut w = csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
            w.write_record(["window", "t", "pred_vx", "pred_vy", "vx", "vy"])?;
            Some(w)
        }
        None => None,
    };
    for (i, w) in wins.iter().enumerate() {
        let y = model.predict(&w.input)?;
        if let Some(out) = writer.as_mut() {
            for t in 0..y.rows() {
                out.write_record([
                    i.to_string(),
                    (w.start + t).to_string(),
                    y.at2(t, 0).to_string(),
                    y.at2(t, 1).to_string(),
                    w.target.at2(t, 0).to_string(),
                    w.target.at2(t, 1).to_string(),
                ])?;
            }
        }
        pred.extend_from_slice(y.data());
        target.extend_from_slice(w.target.data());
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    let rows = pred.len() / 2;
    let r2 = spikedec::bench::r2_score(&Tensor::new(vec![rows, 2], pred)?, &Tensor::new(vec![rows, 2], target)?)?;
    println!("r2 {r2:.4} over {} windows", wins.len());
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let rec = load_rec(&a.data)?;
    let report = run_bench(&model, &rec)?;
    let json = report.to_json();
    match &a.report {
        Some(p) => fs::write(p, format!("{json}\n")).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    if let Some(p) = &a.csv {
        fs::write(p, format!("{}\n{}\n", BenchReport::CSV_HEADER, report.csv_row()))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SplitSpec {
        train: a.split[0],
        val: a.split[1],
        test: a.split[2],
    };
    let params = SynthParams {
        base_hz: a.base_hz,
        gain_hz: a.gain_hz,
        ..SynthParams::default()
    };
    let mut rng = Rng::new(a.seed);
    let rec = synth_reaching(&mut rng, a.seconds, a.channels, &params)?;
    let (tr, va, te) = split(&rec, spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ext = if a.csv { "csv" } else { "ndr" };
    for (name, r) in [("recording", &rec), ("train", &tr), ("val", &va), ("test", &te)] {
        let path = a.out.join(format!("{name}.{ext}"));
        if a.csv {
            save_csv(r, &path)?;
        } else {
            save_ndr(r, &path)?;
        }
    }
    println!(
        "{} bins x {} channels: train {}, val {}, test {}",
        rec.len(),
        rec.channels,
        tr.len(),
        va.len(),
        te.len()
    );
    Ok(())
}

pub fn stream(a: StreamArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let rec = load_rec(&a.data)?;
    let (latency, rate) = stream_latency(&model);
    println!("latency {latency} ms, update rate {rate} Hz");
    let n = a.bins.map_or(rec.len(), |b| b.min(rec.len()));
    let mut st = stream_init(&model)?;
    let mut writer = match &a.out {
        Some(p) => {
            let mut w = csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
            w.write_record(["t", "vx", "vy"])?;
            Some(w)
        }
        None => None,
    };
    let mut emitted = 0usize;
    let started = Instant::now();
    for t in 0..n {
        if let Some(seg) = stream_push(&model, &mut st, &rec.bin(t))? {
            // the segment runs from keypoint next-2 up to keypoint next-1
            let first = (st.next_keypoint - 2) * st.stride;
            if let Some(w) = writer.as_mut() {
                for i in 0..seg.rows() {
                    w.write_record([
                        (first + i).to_string(),
                        seg.at2(i, 0).to_string(),
                        seg.at2(i, 1).to_string(),
                    ])?;
                }
            }
            emitted += seg.rows();
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    let per_bin = started.elapsed().as_secs_f64() * 1e6 / n.max(1) as f64;
    println!("{n} bins pushed, {emitted} velocities emitted, {per_bin:.1} us per bin");
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    if a.keypoints.is_empty() && a.sizes.is_empty() {
        return Err(UsageError("pass --keypoints or --sizes".into()).into());
    }
    let train = load_rec(&part_path(&a.data, "train"))?;
    let val = load_rec(&part_path(&a.data, "val"))?;
    let test = load_rec(&part_path(&a.data, "test"))?;
    let mut configs = Vec::new();
    for &k in &a.keypoints {
        let hidden = a.model.hidden.unwrap_or(20);
        let mut cfg = ModelConfig::with_keypoints(k, a.channels, hidden, a.model.recurrence, 1024)?;
        cfg.input_channels = train.channels;
        cfg.seed = a.fit.seed;
        configs.push((format!("k{k}"), cfg));
    }
    for &h in &a.sizes {
        let m = ModelArgs {
            hidden: Some(h),
            ..a.model.clone()
        };
        configs.push((format!("h{h}"), model_config(&m, train.channels, a.fit.seed)));
    }
    let cfg = train_config(&a.fit);
    let mut out = format!("label,keypoints,hidden,params,{}\n", BenchReport::CSV_HEADER);
    for (label, mc) in configs {
        let keypoints = mc.keypoints()?;
        let hidden = mc.hidden_size;
        eprintln!("sweep {label}: {keypoints} keypoints, hidden {hidden}");
        let model = Model::new(mc)?;
        let (best, _) = fit_logged(&model, &train, &val, &cfg)?;
        let report = run_bench(&best, &test)?;
        out.push_str(&format!(
            "{label},{keypoints},{hidden},{},{}\n",
            best.param_count(),
            report.csv_row()
        ));
    }
    fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
