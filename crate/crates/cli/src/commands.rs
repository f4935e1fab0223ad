//! Subcommand implementations. Every file written to the output directory
//! carries the config hash and seed: a `#` comment line for CSV/DAT files,
//! `config_hash`/`seed` keys for JSON files.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use adol_core::adol::{
    label_scenarios, read_records, sample_scenarios, train_surrogate, write_records, SamplerConfig, Scenario,
};
use adol_core::data_io::{ingest_csv, synthesize, typical_profile, RawSeries, Schema};
use adol_core::dispatch::TwoStageModel;
use adol_core::evalkit::{cost_increment_sweep, error_grid, evaluate_forecasts, sweep_argmin, write_sweep, Stamp};
use adol_core::forecast::{build_features, predict, train_forecaster, FeatureTable, Forecaster, LossKind, TrainedForecaster};
use adol_core::neural::{History, Mlp};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{DataSource, LoadedConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Loss {
    Adol,
    Dl,
    Mse,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Adol => "adol",
            Loss::Dl => "dl",
            Loss::Mse => "mse",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Loss::from_str(s, true).ok()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TypicalFile {
    config_hash: String,
    seed: u64,
    typical: Vec<f64>,
    nominal: Vec<f64>,
    param_names: Vec<String>,
}

pub struct Run {
    cfg: LoadedConfig,
    out: PathBuf,
    stamp: Stamp,
    model: Box<dyn TwoStageModel>,
}

impl Run {
    pub fn new(cfg: LoadedConfig, out: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&out)?;
        let stamp = Stamp { config_hash: cfg.hash(), seed: cfg.config.seed };
        let model = cfg.model()?;
        Ok(Self { cfg, out, stamp, model })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.stamp.config_hash, self.stamp.seed)
    }

    fn write_text(&self, name: &str, body: &str) -> Result<(), CliError> {
        std::fs::write(self.path(name), format!("{}{body}", self.comment()))?;
        Ok(())
    }

    fn write_json(&self, name: &str, mut value: Value) -> Result<(), CliError> {
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), json!(self.stamp.config_hash));
            map.insert("seed".into(), json!(self.stamp.seed));
        }
        std::fs::write(self.path(name), serde_json::to_string_pretty(&value).expect("json value"))?;
        Ok(())
    }

    fn require(&self, name: &str, hint: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::Config(format!("{} not found; run `{hint}` first", p.display())))
        }
    }

    fn series(&self) -> Result<RawSeries, CliError> {
        match &self.cfg.config.data {
            DataSource::Synthetic(s) => Ok(synthesize(&s.spec, s.seed)?),
            DataSource::Csv { path, columns } => {
                let schema = match columns {
                    Some(c) => Schema::from_file(&self.cfg.resolve(c))?,
                    None => Schema::default(),
                };
                let (series, gaps) = ingest_csv(&self.cfg.resolve(path), &schema)?;
                if !gaps.missing.is_empty() {
                    eprintln!("data: {} missing hour(s), interpolated: {}", gaps.missing.len(), gaps.interpolated);
                }
                Ok(series)
            }
        }
    }

    /// Typical load over the training period.
    fn typical(&self, series: &RawSeries) -> Result<Vec<f64>, CliError> {
        let end = series.position(self.cfg.config.split);
        let typical = typical_profile(series, 0..end, self.cfg.profile_mode())?;
        let dim = self.model.forecast_dim();
        if typical.len() != dim {
            return Err(CliError::Config(format!(
                "field `typical`: profile has {} values but the model forecasts {dim}",
                typical.len()
            )));
        }
        Ok(typical)
    }

    fn tables(&self, series: &RawSeries) -> Result<(FeatureTable, FeatureTable), CliError> {
        let spec = self.cfg.features()?;
        if spec.group_size != self.model.forecast_dim() {
            return Err(CliError::Config(format!(
                "field `features.group_size`: {} does not match the forecast length {}",
                spec.group_size,
                self.model.forecast_dim()
            )));
        }
        let table = build_features(series, &spec)?;
        let b = table.position(self.cfg.config.split);
        if b == 0 || b == table.len() {
            return Err(CliError::Config(format!("field `split`: {} leaves an empty train or test set", self.cfg.config.split)));
        }
        Ok((table.slice(0..b), table.slice(b..table.len())))
    }

    fn load_surrogate(&self) -> Result<Mlp, CliError> {
        let p = self.require("surrogate.json", "adol train-surrogate")?;
        let net = Mlp::load(&p)?;
        let want = self.model.forecast_dim() + self.model.nominal_params().len();
        if net.input_dim() != want {
            return Err(CliError::Config(format!("surrogate takes {} inputs but this case needs {want}", net.input_dim())));
        }
        Ok(net)
    }

    fn history_csv(&self, name: &str, header: &str, h: &History) -> Result<(), CliError> {
        let mut s = format!("{header},loss\n");
        for (i, l) in h.iteration.iter().zip(&h.loss) {
            let _ = writeln!(s, "{i},{l}");
        }
        self.write_text(name, &s)
    }

    fn fit(
        &self,
        loss: Loss,
        train: &FeatureTable,
        params: &[f64],
        surrogate: Option<&Mlp>,
        dl_step: f64,
    ) -> Result<TrainedForecaster, CliError> {
        let kind = match loss {
            Loss::Mse => LossKind::Mse,
            Loss::Adol => LossKind::Adol { surrogate: surrogate.expect("surrogate loaded for adol"), params },
            Loss::Dl => LossKind::Decision { model: self.model.as_ref(), params, step: dl_step },
        };
        Ok(train_forecaster(train, kind, &self.cfg.config.forecaster)?)
    }

    fn dl_step(&self, typical: &[f64]) -> f64 {
        self.cfg.config.dl_step_fraction * typical.iter().sum::<f64>() / typical.len() as f64
    }

    pub fn sweep(&self) -> Result<(), CliError> {
        let spec = &self.cfg.config.sweep;
        let typical = self.typical(&self.series()?)?;
        let grid = error_grid(spec.lo, spec.hi, spec.step)?;
        let w = self.model.nominal_params();
        let started = Instant::now();
        let sweep = cost_increment_sweep(self.model.as_ref(), &w, &typical, &grid)?;
        let elapsed = started.elapsed();
        let mut s = String::from("error_pct,total,increment\n");
        for p in &sweep {
            let _ = writeln!(s, "{},{},{}", p.error * 100.0, p.total, p.increment);
        }
        self.write_text("sweep.csv", &s)?;
        write_sweep(&self.path("sweep.dat"), &sweep, &self.stamp)?;
        let best = sweep_argmin(&sweep).expect("non-empty grid");
        let at_zero = sweep.iter().find(|p| p.error == 0.0).map(|p| p.increment);
        self.write_json(
            "sweep_summary.json",
            json!({
                "points": sweep.len(),
                "argmin_error_pct": best.error * 100.0,
                "min_total": best.total,
                "increment_at_zero": at_zero,
                "wall_time_s": elapsed.as_secs_f64(),
                "solves": self.model.solve_count(),
            }),
        )?;
        println!(
            "sweep: {} points in {:.2?}, minimum at {:+.1}% (total {:.2}); increment at 0%: {}",
            sweep.len(),
            elapsed,
            best.error * 100.0,
            best.total,
            at_zero.map_or("not on grid".into(), |v| format!("{v:.2}"))
        );
        Ok(())
    }

    pub fn sample(&self) -> Result<(), CliError> {
        let typical = self.typical(&self.series()?)?;
        let nominal = self.model.nominal_params();
        let samples = sample_scenarios(&typical, &nominal, &self.cfg.config.sampler)?;
        let mut s = String::new();
        let head: Vec<String> = (0..typical.len())
            .map(|i| format!("forecast_{i}"))
            .chain((0..nominal.len()).map(|i| format!("param_{i}")))
            .collect();
        let _ = writeln!(s, "{}", head.join(","));
        for sc in &samples {
            let row: Vec<String> = sc.forecast.iter().chain(&sc.params).map(f64::to_string).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        self.write_text("samples.csv", &s)?;
        let file = TypicalFile {
            config_hash: self.stamp.config_hash.clone(),
            seed: self.stamp.seed,
            typical,
            nominal,
            param_names: self.model.param_names(),
        };
        std::fs::write(self.path("typical.json"), serde_json::to_string_pretty(&file).expect("json"))?;
        println!("sample: {} scenarios written to {}", samples.len(), self.path("samples.csv").display());
        Ok(())
    }

    fn read_samples(&self, typical_len: usize) -> Result<Vec<Scenario>, CliError> {
        let path = self.require("samples.csv", "adol sample")?;
        let text = std::fs::read_to_string(&path)?;
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| CliError::Config(format!("{} is empty", path.display())))?;
        let d = header.split(',').filter(|h| h.starts_with("forecast_")).count();
        if d != typical_len {
            return Err(CliError::Config(format!("{} has {d} forecast columns, expected {typical_len}", path.display())));
        }
        lines
            .enumerate()
            .map(|(k, line)| {
                let nums = line
                    .split(',')
                    .map(str::parse::<f64>)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(format!("{} row {}: {e}", path.display(), k + 1)))?;
                Ok(Scenario { forecast: nums[..d].to_vec(), params: nums[d..].to_vec() })
            })
            .collect()
    }

    fn read_typical(&self) -> Result<TypicalFile, CliError> {
        let p = self.require("typical.json", "adol sample")?;
        serde_json::from_str(&std::fs::read_to_string(&p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    }

    pub fn label(&self) -> Result<(), CliError> {
        let typical = self.read_typical()?;
        let samples = self.read_samples(typical.typical.len())?;
        let started = Instant::now();
        let records = label_scenarios(self.model.as_ref(), &samples, &typical.typical);
        let elapsed = started.elapsed();
        let path = self.path("records.csv");
        write_records(&path, &records)?;
        let body = std::fs::read_to_string(&path)?;
        self.write_text("records.csv", &body)?;
        let failed = records.iter().filter(|r| r.failed()).count();
        let flagged = records.iter().filter(|r| r.shed_flag).count();
        self.write_json(
            "label_summary.json",
            json!({ "records": records.len(), "failed": failed, "shed_flagged": flagged, "solves": self.model.solve_count(), "wall_time_s": elapsed.as_secs_f64() }),
        )?;
        println!("label: {} records in {elapsed:.2?} ({failed} failed, {flagged} with shed or spill)", records.len());
        Ok(())
    }

    pub fn train_surrogate(&self) -> Result<(), CliError> {
        let records = read_records(&self.require("records.csv", "adol label")?)?;
        let started = Instant::now();
        let fit = train_surrogate(&records, &self.cfg.config.surrogate)?;
        let elapsed = started.elapsed();
        let mut model: Value = serde_json::from_str(&fit.net.to_json()).expect("model json");
        model["config_hash"] = json!(self.stamp.config_hash);
        model["seed"] = json!(self.stamp.seed);
        std::fs::write(self.path("surrogate.json"), serde_json::to_string_pretty(&model).expect("json"))?;
        self.history_csv("surrogate_history.csv", "iteration", &fit.history)?;
        self.write_json(
            "surrogate_summary.json",
            json!({
                "holdout_mape_pct": fit.holdout_mape,
                "holdout_mse": fit.holdout_mse,
                "train_count": fit.train_count,
                "holdout_count": fit.holdout_count,
                "wall_time_s": elapsed.as_secs_f64(),
            }),
        )?;
        println!(
            "train-surrogate: {} train / {} holdout records, holdout MAPE {:.4}%, {elapsed:.2?}",
            fit.train_count, fit.holdout_count, fit.holdout_mape
        );
        Ok(())
    }

    fn save_forecaster(&self, name: &str, f: &Forecaster) -> Result<(), CliError> {
        self.write_json(name, serde_json::to_value(f).expect("forecaster json"))
    }

    pub fn train_forecaster(&self, loss: Loss) -> Result<(), CliError> {
        let series = self.series()?;
        let typical = self.typical(&series)?;
        let (train, _) = self.tables(&series)?;
        let w = self.model.nominal_params();
        let surrogate = if loss == Loss::Adol { Some(self.load_surrogate()?) } else { None };
        let tf = self.fit(loss, &train, &w, surrogate.as_ref(), self.dl_step(&typical))?;
        let n = loss.name();
        self.save_forecaster(&format!("forecaster_{n}.json"), &tf.model)?;
        self.history_csv(&format!("forecaster_{n}_history.csv"), "epoch", &tf.history)?;
        self.write_json(
            &format!("forecaster_{n}_summary.json"),
            json!({
                "loss": n,
                "epochs": tf.solves_per_epoch.len(),
                "instances": train.len(),
                "solves_per_epoch": tf.solves_per_epoch,
                "total_solves": tf.total_solves(),
                "final_loss": tf.history.last(),
                "wall_time_s": tf.wall_time.as_secs_f64(),
            }),
        )?;
        println!(
            "train-forecaster --loss {n}: {} instances, {} epochs, {} dispatch solves, {:.2?}",
            train.len(),
            tf.solves_per_epoch.len(),
            tf.total_solves(),
            tf.wall_time
        );
        Ok(())
    }

    pub fn evaluate(&self, loss: Option<Loss>) -> Result<(), CliError> {
        let losses: Vec<Loss> = match loss {
            Some(l) => vec![l],
            None => [Loss::Adol, Loss::Dl, Loss::Mse].into_iter().filter(|l| self.path(&format!("forecaster_{}.json", l.name())).exists()).collect(),
        };
        if losses.is_empty() {
            return Err(CliError::Config("no trained forecaster found; run `adol train-forecaster` first".into()));
        }
        let series = self.series()?;
        let (_, test) = self.tables(&series)?;
        let w = self.model.nominal_params();
        for l in losses {
            let n = l.name();
            let p = self.require(&format!("forecaster_{n}.json"), &format!("adol train-forecaster --loss {n}"))?;
            let f = Forecaster::load(&p)?;
            let forecasts = predict(&f, &test)?;
            let report = evaluate_forecasts(n, self.model.as_ref(), &w, &test.timestamps, &forecasts, &test.y)?;
            report.write(&self.out, &format!("eval_{n}"), &self.stamp)?;
            println!(
                "evaluate {n}: MTDO {:.2}, MAPE {:.2}%, mean error {:+.2}%, histogram mode {:+.0}% over {} instances",
                report.mtdo,
                report.mape,
                report.mean_error,
                report.histogram.mode().unwrap_or(f64::NAN),
                report.instances.len()
            );
        }
        Ok(())
    }

    pub fn scenarios(&self) -> Result<(), CliError> {
        let spec = &self.cfg.config.scenarios;
        let losses: Vec<Loss> = spec.losses.iter().filter_map(|s| Loss::parse(s)).collect();
        let series = self.series()?;
        let typical = self.typical(&series)?;
        let (train, test) = self.tables(&series)?;
        let surrogate = if losses.contains(&Loss::Adol) { Some(self.load_surrogate()?) } else { None };
        let draws = sample_scenarios(
            &typical,
            &self.model.nominal_params(),
            &SamplerConfig { gamma: 0.0, beta: spec.beta, sample_count: spec.count, seed: self.stamp.seed.wrapping_add(3) },
        )?;

        let mut table = String::from("scenario,loss,mtdo,mape,train_solves\n");
        let mut timing = String::from("scenario,loss,wall_time_s\n");
        let mut params = format!("scenario,{}\n", self.model.param_names().join(","));
        let mut mtdo = vec![[f64::NAN; 3]; draws.len()];
        let mut walls = [0.0f64; 3];
        println!("{:>8} {:>5} {:>12} {:>7} {:>12} {:>10}", "scenario", "loss", "MTDO", "MAPE%", "train solves", "wall s");
        for (k, d) in draws.iter().enumerate() {
            let row: Vec<String> = d.params.iter().map(f64::to_string).collect();
            let _ = writeln!(params, "{k},{}", row.join(","));
            for &l in &losses {
                let tf = self.fit(l, &train, &d.params, surrogate.as_ref(), self.dl_step(&typical))?;
                let forecasts = predict(&tf.model, &test)?;
                let report = evaluate_forecasts(l.name(), self.model.as_ref(), &d.params, &test.timestamps, &forecasts, &test.y)?;
                let wall = tf.wall_time.as_secs_f64();
                let _ = writeln!(table, "{k},{},{},{},{}", l.name(), report.mtdo, report.mape, tf.total_solves());
                let _ = writeln!(timing, "{k},{},{wall}", l.name());
                let slot = l as usize;
                mtdo[k][slot] = report.mtdo;
                walls[slot] += wall;
                println!("{k:>8} {:>5} {:>12.2} {:>7.2} {:>12} {:>10.2}", l.name(), report.mtdo, report.mape, tf.total_solves(), wall);
            }
        }
        self.write_text("scenarios.csv", &table)?;
        self.write_text("scenarios_timing.csv", &timing)?;
        self.write_text("scenarios_params.csv", &params)?;
        let (a, dl, m) = (Loss::Adol as usize, Loss::Dl as usize, Loss::Mse as usize);
        let adol_le_mse = mtdo.iter().filter(|r| r[a] <= r[m]).count();
        let ratio = (walls[a] > 0.0 && walls[dl] > 0.0).then(|| walls[dl] / walls[a]);
        self.write_json(
            "scenarios_summary.json",
            json!({
                "scenarios": draws.len(),
                "losses": losses.iter().map(|l| l.name()).collect::<Vec<_>>(),
                "surrogate_retrains": 0,
                "relabels": 0,
                "adol_le_mse": adol_le_mse,
                "dl_over_adol_wall_time": ratio,
            }),
        )?;
        println!("scenarios: ADOL ≤ MSE in {adol_le_mse} of {}; surrogate retrained 0 times", draws.len());
        if let Some(r) = ratio {
            println!("scenarios: DL training took {r:.1}× the ADOL wall time");
        }
        Ok(())
    }

    pub fn report(&self) -> Result<(), CliError> {
        let dir = self.path("report");
        std::fs::create_dir_all(&dir)?;
        let mut names: Vec<String> = std::fs::read_dir(&self.out)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        let mut summaries = serde_json::Map::new();
        let mut copied = 0;
        for name in &names {
            let src = self.out.join(name);
            if name.ends_with("_summary.json") {
                let v: Value = serde_json::from_str(&std::fs::read_to_string(&src)?)
                    .map_err(|e| CliError::Config(format!("{}: {e}", src.display())))?;
                summaries.insert(name.trim_end_matches("_summary.json").to_string(), v);
            }
            if name.ends_with(".csv") || name.ends_with(".dat") || name.ends_with("_summary.json") {
                std::fs::copy(&src, dir.join(name))?;
                copied += 1;
            }
        }
        if summaries.is_empty() {
            return Err(CliError::Config(format!("no summaries in {}; run some stages first", self.out.display())));
        }

        let mut md = String::from("# Run report\n\n");
        let _ = writeln!(md, "config hash `{}`, seed {}\n", self.stamp.config_hash, self.stamp.seed);
        let evals: Vec<(&String, &Value)> = summaries.iter().filter(|(k, _)| k.starts_with("eval_")).collect();
        if !evals.is_empty() {
            md.push_str("| loss | MTDO | MAPE % | mean error % | histogram mode % |\n|---|---|---|---|---|\n");
            for (k, v) in evals {
                let _ = writeln!(
                    md,
                    "| {} | {:.2} | {:.2} | {:+.2} | {} |",
                    k.trim_start_matches("eval_"),
                    v["mtdo"].as_f64().unwrap_or(f64::NAN),
                    v["mape"].as_f64().unwrap_or(f64::NAN),
                    v["mean_error_pct"].as_f64().unwrap_or(f64::NAN),
                    v["histogram_mode_pct"]
                );
            }
            md.push('\n');
        }
        for (k, v) in &summaries {
            if !k.starts_with("eval_") {
                let _ = writeln!(md, "## {k}\n\n```json\n{}\n```\n", serde_json::to_string_pretty(v).expect("json"));
            }
        }
        std::fs::write(dir.join("report.md"), md)?;
        let bundle = json!({ "config_hash": self.stamp.config_hash, "seed": self.stamp.seed, "stages": summaries });
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&bundle).expect("json"))?;
        println!("report: {copied} files bundled into {}", dir.display());
        Ok(())
    }
}

