use std::collections::BTreeMap;
use std::fs;

use serde::Serialize;
use serde_json::{json, Value};
use unsc::data::{save_csv, split};
use unsc::eval::{contour_directions, loss_contour, orthogonality_audit, symmetric_axis, ContourGrid, MiaReport, UtilityReport};
use unsc::experiment::{ablation, generate_data, ExperimentConfig, Prepared};
use unsc::nn::{fit, network_hash, Network};
use unsc::subspace::{all_class_subspaces, ProjectorCache};
use unsc::unlearn::{Labeling, RunManifest, MANIFEST_VERSION};
use unsc::{Error, Result};

use crate::artifacts::*;

/// Unlearning variants reachable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Pseudo-labels under null-space projection.
    Unsc,
    /// Random remaining-class labels.
    Rl,
    /// Random labels under null-space projection.
    #[value(name = "rl+null_space")]
    RlNullSpace,
    /// Gradient ascent on the original labels.
    Ga,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Unsc => "unsc",
            Method::Rl => "rl",
            Method::RlNullSpace => "rl+null_space",
            Method::Ga => "ga",
        }
    }

    fn plan_args(self) -> (Labeling, bool) {
        match self {
            Method::Unsc => (Labeling::Pseudo, true),
            Method::Rl => (Labeling::Random, false),
            Method::RlNullSpace => (Labeling::Random, true),
            Method::Ga => (Labeling::Keep, false),
        }
    }
}

pub struct Context {
    pub config: ExperimentConfig,
    pub layout: Layout,
}

/// What a successful subcommand prints: the files it wrote.
#[derive(Debug, Serialize)]
pub struct Outcome {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

impl Context {
    fn outcome(&self, command: &str, files: &[std::path::PathBuf], summary: Value) -> Outcome {
        Outcome {
            command: command.to_string(),
            config_hash: self.config.hash(),
            seed: self.config.seed,
            artifacts: files.iter().map(|p| p.display().to_string()).collect(),
            summary,
        }
    }

    /// Dataset plus a check that it is the one this config generates.
    fn data(&self) -> Result<(unsc::data::Dataset, String)> {
        let (ds, meta) = load_data(&self.layout)?;
        let expected = generate_data(&self.config)?.content_hash();
        if expected != meta.stamp.data_hash {
            return Err(Error::ArtifactMismatch(format!(
                "{} was generated from a different data section or seed; rerun gen-data",
                self.layout.data_csv().display()
            )));
        }
        Ok((ds, meta.stamp.data_hash))
    }

    fn prepared(&self) -> Result<(Prepared, String)> {
        let (data, data_hash) = self.data()?;
        let splits = split(&data, &self.config.split_spec())?;
        let (original, meta) = load_checkpoint(&self.layout.checkpoint("original"), &data_hash)?;
        let original_log = meta.train_log.ok_or_else(|| {
            Error::ArtifactMismatch("original checkpoint carries no training log".into())
        })?;
        let p = Prepared { config: self.config.clone(), data, splits, original, original_log };
        Ok((p, data_hash))
    }

    fn projectors(&self, p: &Prepared, data_hash: &str, epsilons: Vec<f64>) -> Result<ProjectorCache> {
        let path = self.layout.subspaces();
        let set: SubspaceSet = read_json(&path)?;
        check_data_hash(&path, &set.stamp, data_hash)?;
        if set.source_checkpoint_hash != network_hash(&p.original) {
            return Err(Error::ArtifactMismatch(format!(
                "{} was built from a different original model; rerun subspace",
                path.display()
            )));
        }
        ProjectorCache::new(set.subspaces, epsilons)
    }

    fn load_model(&self, model: &str, data_hash: &str) -> Result<Network> {
        Ok(load_checkpoint(&self.layout.checkpoint(model), data_hash)?.0)
    }

    pub fn gen_data(&self) -> Result<Outcome> {
        let ds = generate_data(&self.config)?;
        let hash = ds.content_hash();
        let meta = DataMeta {
            stamp: Stamp::new(&self.config, &hash),
            num_classes: ds.num_classes(),
            samples: ds.len(),
            provenance: ds.provenance.description.clone(),
        };
        let (csv, json) = (self.layout.data_csv(), self.layout.data_meta());
        fs::create_dir_all(&self.layout.dir)?;
        save_csv(&ds, &csv)?;
        write_json(&json, &meta)?;
        Ok(self.outcome("gen-data", &[csv, json], json!({ "data_hash": hash, "samples": ds.len() })))
    }

    pub fn train(&self) -> Result<Outcome> {
        let (data, data_hash) = self.data()?;
        let splits = split(&data, &self.config.split_spec())?;
        let (net, log) = fit(
            self.config.architecture.clone(),
            self.config.num_classes(),
            &splits.train,
            &splits.val,
            &self.config.train,
            self.config.sub_seed("train"),
        )?;
        let path = self.layout.checkpoint("original");
        let summary = json!({ "epochs_run": log.epochs_run, "best_epoch": log.best_epoch, "best_val_accuracy": log.best_val_accuracy });
        let meta = CheckpointMeta {
            stamp: Stamp::new(&self.config, &data_hash),
            role: "original".into(),
            train_log: Some(log),
            manifest: None,
        };
        save_checkpoint(&path, &net, &meta)?;
        Ok(self.outcome("train", &[path], summary))
    }

    pub fn subspace(&self) -> Result<Outcome> {
        let (p, data_hash) = self.prepared()?;
        let subspaces = all_class_subspaces(
            &p.original,
            &p.splits.train,
            self.config.subspace_batch,
            self.config.sub_seed("subspace"),
        )?;
        let ranks: Vec<Vec<usize>> = subspaces
            .iter()
            .map(|s| s.layers.iter().map(|l| l.singular_values.iter().filter(|&&v| v > 0.0).count()).collect())
            .collect();
        let set = SubspaceSet {
            stamp: Stamp::new(&self.config, &data_hash),
            source_checkpoint_hash: network_hash(&p.original),
            batch_size: self.config.subspace_batch,
            subspaces,
        };
        let path = self.layout.subspaces();
        write_json(&path, &set)?;
        Ok(self.outcome("subspace", &[path], json!({ "class_layer_ranks": ranks })))
    }

    pub fn unlearn(&self, method: Method) -> Result<Outcome> {
        let (p, data_hash) = self.prepared()?;
        let (labeling, null) = method.plan_args();
        let plan = self.config.plan_for(labeling, null);
        let cache = if null { Some(self.projectors(&p, &data_hash, self.config.layer_epsilons()?)?) } else { None };
        let (net, log) = p.unlearn(&plan, cache.as_ref())?;
        let build = p.remaining_build_batch()?;
        let trace = p.original.forward(&build.all_columns(), true)?.trace.expect("recorded");
        let audit = orthogonality_audit(&p.original, &net, &trace, None)?;
        let manifest = RunManifest {
            format_version: MANIFEST_VERSION,
            plan,
            seed: self.config.seed,
            config_hash: self.config.hash(),
            source_checkpoint_hash: network_hash(&p.original),
            result_checkpoint_hash: network_hash(&net),
            epoch_loss: log.epoch_loss,
            epoch_forget_accuracy: log.epoch_forget_accuracy,
            audit_residuals: audit.residuals.clone(),
        };
        let path = self.layout.checkpoint(method.name());
        let meta = CheckpointMeta {
            stamp: Stamp::new(&self.config, &data_hash),
            role: method.name().into(),
            train_log: None,
            manifest: Some(manifest),
        };
        save_checkpoint(&path, &net, &meta)?;
        Ok(self.outcome("unlearn", &[path], json!({ "method": method.name(), "audit_residuals": audit.residuals })))
    }

    pub fn retrain(&self) -> Result<Outcome> {
        let (p, data_hash) = self.prepared()?;
        let (net, log) = p.retrain()?;
        let path = self.layout.checkpoint("retrain");
        let summary = json!({ "epochs_run": log.epochs_run, "best_val_accuracy": log.best_val_accuracy });
        let meta = CheckpointMeta {
            stamp: Stamp::new(&self.config, &data_hash),
            role: "retrain".into(),
            train_log: Some(log),
            manifest: None,
        };
        save_checkpoint(&path, &net, &meta)?;
        Ok(self.outcome("retrain", &[path], summary))
    }

    pub fn evaluate(&self, model: &str) -> Result<Outcome> {
        #[derive(Serialize)]
        struct Evaluation {
            stamp: Stamp,
            model: String,
            checkpoint_hash: String,
            utility: UtilityReport,
            mia: MiaReport,
        }
        let (p, data_hash) = self.prepared()?;
        let net = self.load_model(model, &data_hash)?;
        let ev = Evaluation {
            stamp: Stamp::new(&self.config, &data_hash),
            model: model.to_string(),
            checkpoint_hash: network_hash(&net),
            utility: p.utility(&net)?,
            mia: p.mia(&net)?,
        };
        let path = self.layout.evaluation(model);
        write_json(&path, &ev)?;
        let summary = json!({
            "acc_remaining_test": ev.utility.acc_remaining_test,
            "acc_unlearn_test": ev.utility.acc_unlearn_test,
            "acc_mia": ev.mia.acc_mia,
        });
        Ok(self.outcome("evaluate", &[path], summary))
    }

    pub fn contour(&self) -> Result<Outcome> {
        #[derive(Serialize)]
        struct Contour {
            stamp: Stamp,
            excluded_class: usize,
            epsilon: f64,
            null_axis_variation: f64,
            off_axis_variation: f64,
            grid: ContourGrid,
        }
        let (p, data_hash) = self.prepared()?;
        let spec = &self.config.contour;
        let cache = self.projectors(&p, &data_hash, vec![spec.epsilon; p.original.num_layers()])?;
        let class = self.config.unlearn_classes[0];
        let (nd, od) = contour_directions(&p.original, cache.get(class)?, self.config.sub_seed("contour"))?;
        let axis = symmetric_axis(spec.half_width, spec.points);
        let grid = loss_contour(&p.original, &nd, &od, &axis, &axis, &p.splits.test_remaining)?;
        let out = Contour {
            stamp: Stamp::new(&self.config, &data_hash),
            excluded_class: class,
            epsilon: spec.epsilon,
            null_axis_variation: grid.null_axis_variation().unwrap_or(0.0),
            off_axis_variation: grid.off_axis_variation().unwrap_or(0.0),
            grid,
        };
        let (json_path, csv_path) = (self.layout.path("contour.json"), self.layout.path("contour.csv"));
        write_json(&json_path, &out)?;
        write_text(&csv_path, &out.grid.to_csv())?;
        let summary = json!({ "null_axis_variation": out.null_axis_variation, "off_axis_variation": out.off_axis_variation });
        Ok(self.outcome("contour", &[json_path, csv_path], summary))
    }

    pub fn ablate(&self) -> Result<Outcome> {
        let (p, data_hash) = self.prepared()?;
        let table = ablation(&p)?;
        let (json_path, csv_path) = (self.layout.path("ablation.json"), self.layout.path("ablation.csv"));
        write_json(&json_path, &json!({ "stamp": Stamp::new(&self.config, &data_hash), "table": table }))?;
        write_text(&csv_path, &table.to_csv())?;
        Ok(self.outcome("ablate", &[json_path, csv_path], serde_json::to_value(&table.rows)?))
    }

    /// Joins every stamped artifact in the run directory, refusing any built
    /// from a different dataset.
    pub fn report(&self) -> Result<Outcome> {
        let (_, meta) = load_data(&self.layout)?;
        let data_hash = meta.stamp.data_hash.clone();
        let mut names: Vec<String> = fs::read_dir(&self.layout.dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".json") && n != "report.json")
            .collect();
        names.sort();
        let mut artifacts = BTreeMap::new();
        let mut evaluations = BTreeMap::new();
        let mut extra = BTreeMap::new();
        for name in &names {
            let path = self.layout.path(name);
            let doc: Value = read_json(&path)?;
            let stamp_value = doc
                .get("stamp")
                .or_else(|| doc.pointer("/metadata/stamp"))
                .cloned()
                .ok_or_else(|| Error::ArtifactMismatch(format!("{} carries no stamp", path.display())))?;
            let stamp: Stamp = serde_json::from_value(stamp_value)
                .map_err(|e| Error::ArtifactMismatch(format!("{}: stamp: {e}", path.display())))?;
            check_data_hash(&path, &stamp, &data_hash)?;
            if name.starts_with("evaluation-") {
                let model = doc["model"].as_str().unwrap_or_default().to_string();
                evaluations.insert(
                    model,
                    json!({
                        "acc_remaining_test": doc["utility"]["acc_remaining_test"],
                        "acc_unlearn_test": doc["utility"]["acc_unlearn_test"],
                        "acc_mia": doc["mia"]["acc_mia"],
                    }),
                );
            } else if name == "ablation.json" {
                extra.insert("ablation", doc["table"]["rows"].clone());
            } else if name == "contour.json" {
                extra.insert(
                    "contour",
                    json!({ "null_axis_variation": doc["null_axis_variation"], "off_axis_variation": doc["off_axis_variation"] }),
                );
            }
            artifacts.insert(name.clone(), stamp);
        }
        let report = json!({
            "stamp": Stamp::new(&self.config, &data_hash),
            "artifacts": artifacts,
            "evaluations": evaluations,
            "ablation": extra.get("ablation"),
            "contour": extra.get("contour"),
        });
        let path = self.layout.path("report.json");
        write_json(&path, &report)?;
        Ok(self.outcome("report", &[path], json!({ "artifacts": names.len() })))
    }
}
