//! Pipeline stages. Each stage persists its artifact under the output
//! directory and reuses a persisted artifact whose stage key matches.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use voltplace::agd::{agd_refine, write_history, AgdCase, AgdResult};
use voltplace::cla::{fit_bundle, ClaBundle, SelectionOptions};
use voltplace::netmodel::{apply_configuration, load_native, parse_matpower, to_native, Configuration, Limits, Network, Study};
use voltplace::placement::{
    build_bilinear, build_kkt, build_milp, heuristic_placement, model_stats, solve_placement, ConfigInput, Formulation,
    HeuristicMode, ModelStats, PlacementError, PlacementModel, PlacementOptions, PlacementSolution, PlacementSpec,
};
use voltplace::sampling::{draw_samples, range_from_fractions, InjectionRange, SampleMeta, SampleOptions, SampleSet};
use voltplace::validate::{evaluate, render_table, threshold_strings, TableColumn, ValidationCase, ValidationReport};

use crate::config::{CaseFormat, StudyConfig};

/// Envelope of every JSON artifact.
#[derive(Serialize, Deserialize)]
pub struct Artifact<T> {
    pub stage: String,
    pub input_hash: String,
    pub stage_key: String,
    pub study: StudyConfig,
    pub data: T,
}

pub struct ConfigCase {
    pub name: String,
    pub net: Network,
    pub range: InjectionRange,
}

/// Loaded case plus everything needed to run stages.
pub struct Pipeline {
    pub cfg: StudyConfig,
    pub out: PathBuf,
    /// Git-style blob hash of the case file.
    pub input_hash: String,
    pub study: Study,
    pub cases: Vec<ConfigCase>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn blob_hash(bytes: &[u8]) -> String {
    let mut data = format!("blob {}\0", bytes.len()).into_bytes();
    data.extend_from_slice(bytes);
    sha256_hex(&data)
}

impl Pipeline {
    pub fn load(cfg: StudyConfig) -> Result<Self> {
        cfg.validate()?;
        let path = cfg.case_path().to_path_buf();
        let bytes = fs::read(&path).with_context(|| format!("reading case {}", path.display()))?;
        let text = String::from_utf8(bytes.clone()).context("case file is not UTF-8")?;
        let (mut study, native_range) = match cfg.format() {
            CaseFormat::Matpower => {
                let network = parse_matpower(&text)?;
                let injection_range = range_from_fractions(&network, 0.5, 1.5, &[])?;
                let limits = Limits::default();
                (Study { network, configurations: vec![Configuration::nominal()], injection_range, limits }, false)
            }
            _ => (load_native(&text)?, true),
        };
        if cfg.loads_scale != 1.0 {
            if native_range && cfg.range.is_none() {
                bail!("loads_scale needs an explicit `range` for native cases");
            }
            study.network = study.network.scaled_injections(cfg.loads_scale);
        }
        if let Some(r) = &cfg.range {
            study.injection_range = range_from_fractions(&study.network, r.lo, r.hi, &r.overrides)?;
        } else if !native_range {
            study.injection_range = range_from_fractions(&study.network, 0.5, 1.5, &[])?;
        }
        if let Some(l) = cfg.limits {
            study.limits = Limits {
                v_min: l.v_min.unwrap_or(study.limits.v_min),
                v_max: l.v_max.unwrap_or(study.limits.v_max),
            };
        }
        study.network = study.network.clone().with_limits(study.limits);
        let mut cases = Vec::new();
        for c in &study.configurations {
            if !cfg.configurations.is_empty() && !cfg.configurations.contains(&c.name) {
                continue;
            }
            let net = apply_configuration(&study.network, c)?;
            cases.push(ConfigCase { name: c.name.clone(), net, range: study.injection_range.clone() });
        }
        if let Some(missing) = cfg.configurations.iter().find(|n| !cases.iter().any(|c| &c.name == *n)) {
            bail!("configuration {missing} is not defined by the case");
        }
        let out = cfg.output_dir();
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self { input_hash: blob_hash(&bytes), out, study, cases, cfg })
    }

    fn key(&self, stage: &str) -> String {
        let c = &self.cfg;
        let mut parts = vec![
            serde_json::to_value(self.input_hash.as_str()).unwrap(),
            serde_json::to_value((c.loads_scale, &c.range, &c.limits, &c.configurations)).unwrap(),
            serde_json::to_value(&c.sampling).unwrap(),
        ];
        if stage != "samples" {
            parts.push(serde_json::to_value(&c.cla).unwrap());
        }
        if matches!(stage, "place" | "agd" | "validate") {
            parts.push(serde_json::to_value(&c.placement).unwrap());
        }
        if matches!(stage, "agd" | "validate") {
            parts.push(serde_json::to_value(&c.agd).unwrap());
        }
        parts.push(serde_json::Value::String(stage.into()));
        sha256_hex(serde_json::to_string(&parts).unwrap().as_bytes())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_artifact<T: Serialize>(&self, name: &str, stage: &str, data: &T) -> Result<PathBuf> {
        let art = Artifact {
            stage: stage.into(),
            input_hash: self.input_hash.clone(),
            stage_key: self.key(stage),
            study: StudyConfig { output: None, ..self.cfg.clone() },
            data,
        };
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, serde_json::to_string_pretty(&art)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Reads an artifact whose stage key matches the current config.
    fn cached<T: DeserializeOwned>(&self, name: &str, stage: &str) -> Option<T> {
        let text = fs::read_to_string(self.path(name)).ok()?;
        let art: Artifact<T> = serde_json::from_str(&text).ok()?;
        (art.stage_key == self.key(stage)).then_some(art.data)
    }

    /// Reads an artifact regardless of its key.
    pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<Artifact<T>> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn sample_opts(&self) -> SampleOptions {
        SampleOptions {
            voltvar: self.cfg.sampling.voltvar,
            ..SampleOptions::default()
        }
    }

    /// Writes the resolved case in the native format.
    pub fn import(&self) -> Result<PathBuf> {
        let path = self.path("case.json");
        fs::write(&path, to_native(&self.study))?;
        self.write_artifact("study.json", "import", &serde_json::json!({ "case": path }))?;
        Ok(path)
    }

    fn sample_set(&self, case: &ConfigCase, tag: &str, n: usize, seed: u64) -> Result<SampleSet> {
        let csv = format!("samples/{}_{tag}.csv", case.name);
        let side = format!("samples/{}_{tag}.json", case.name);
        if let Some(meta) = self.cached::<SampleMeta>(&side, "samples") {
            if let Ok(f) = fs::File::open(self.path(&csv)) {
                if let Ok(set) = SampleSet::read_csv(f, &meta) {
                    if set.len() == n {
                        return Ok(set);
                    }
                }
            }
        }
        let set = draw_samples(&case.net, &case.range, n, seed, &self.sample_opts(), &case.name)?;
        let path = self.path(&csv);
        fs::create_dir_all(path.parent().unwrap())?;
        set.write_csv(fs::File::create(&path)?)?;
        self.write_artifact(&side, "samples", &set.meta(&case.range, &self.sample_opts()))?;
        Ok(set)
    }

    /// Training and selection samples of every configuration.
    pub fn samples(&self) -> Result<Vec<(SampleSet, Option<SampleSet>)>> {
        let s = &self.cfg.sampling;
        self.cases
            .iter()
            .map(|c| {
                let train = self.sample_set(c, "train", s.n_initial, s.seed_initial)?;
                let select =
                    if s.n_selection > 0 { Some(self.sample_set(c, "select", s.n_selection, s.seed_selection)?) } else { None };
                Ok((train, select))
            })
            .collect()
    }

    pub fn bundles(&self, samples: &[(SampleSet, Option<SampleSet>)]) -> Result<Vec<ClaBundle>> {
        let sel = SelectionOptions {
            top_k: self.cfg.cla.top_k,
            max_rounds: self.cfg.cla.rounds,
        };
        self.cases
            .iter()
            .zip(samples)
            .map(|(c, (train, select))| {
                let name = format!("cla/{}.json", c.name);
                if let Some(b) = self.cached::<ClaBundle>(&name, "cla") {
                    return Ok(b);
                }
                let b = fit_bundle(train, select.as_ref(), self.cfg.cla.output_kind, &sel)?;
                self.write_artifact(&name, "cla", &b)?;
                Ok(b)
            })
            .collect()
    }

    /// Placement inputs: CLAs plus sampled extremes over all training samples.
    pub fn inputs(&self) -> Result<(Vec<ConfigInput>, Vec<SampleSet>)> {
        let samples = self.samples()?;
        let bundles = self.bundles(&samples)?;
        let mut inputs = Vec::new();
        let mut pools = Vec::new();
        for ((c, (train, select)), b) in self.cases.iter().zip(samples).zip(bundles) {
            let pool = match &select {
                Some(s) => train.concat(s),
                None => train,
            };
            inputs.push(ConfigInput::new(&c.net, b, c.range.clone(), &pool)?);
            pools.push(pool);
        }
        Ok((inputs, pools))
    }

    pub fn spec(&self, inputs: &[ConfigInput], options: PlacementOptions) -> PlacementSpec {
        PlacementSpec { configs: inputs.to_vec(), options }
    }

    pub fn place(&self, inputs: &[ConfigInput]) -> Result<PlacementSolution> {
        if let Some(sol) = self.cached::<PlacementSolution>("solution.json", "place") {
            return Ok(sol);
        }
        let sol = solve_placement(&self.spec(inputs, self.cfg.placement.clone()))?;
        self.write_artifact("solution.json", "place", &sol)?;
        Ok(sol)
    }

    pub fn refine(&self, sol: &PlacementSolution, pools: &[SampleSet]) -> Result<AgdResult> {
        let cases: Vec<AgdCase> = self.cases.iter().zip(pools).map(|(c, p)| AgdCase { net: &c.net, samples: p }).collect();
        Ok(agd_refine(sol, &cases, &self.cfg.agd, self.cfg.placement.delta)?)
    }

    pub fn agd(&self, sol: &PlacementSolution, pools: &[SampleSet]) -> Result<AgdResult> {
        if let Some(res) = self.cached::<AgdResult>("agd_solution.json", "agd") {
            return Ok(res);
        }
        let res = self.refine(sol, pools)?;
        self.write_artifact("agd_solution.json", "agd", &res)?;
        let mut buf = Vec::new();
        write_history(&res.runs, &mut buf)?;
        fs::write(self.path("agd_history.csv"), buf)?;
        self.write_artifact("agd_history.meta.json", "agd", &"agd_history.csv")?;
        Ok(res)
    }

    pub fn validation_cases(&self) -> Vec<ValidationCase<'_>> {
        self.cases
            .iter()
            .map(|c| ValidationCase { name: &c.name, net: &c.net, range: &c.range })
            .collect()
    }

    pub fn evaluate(&self, sol: &PlacementSolution) -> Result<ValidationReport> {
        let s = &self.cfg.sampling;
        Ok(evaluate(sol, &self.validation_cases(), s.n_validate, s.seed_validate, &self.sample_opts())?)
    }

    fn header(&self) -> String {
        format!(
            "# input_hash: {}\n# study: {}\n",
            self.input_hash,
            serde_json::to_string(&self.cfg).unwrap()
        )
    }

    /// Validates a solution, writing `<stem>.json` and `<stem>.txt`.
    pub fn validate(&self, sol: &PlacementSolution, stem: &str, label: &str) -> Result<ValidationReport> {
        let rep = self.evaluate(sol)?;
        self.write_artifact(&format!("{stem}.json"), "validate", &rep)?;
        let cols: Vec<TableColumn> = rep
            .configs
            .iter()
            .map(|c| TableColumn {
                label: format!("{label} / {}", c.config),
                seconds: Some(sol.solver.as_ref().map_or(0.0, |s| s.seconds)),
                sensors: sol.sensors.clone(),
                thresholds: sol.for_config(&c.config).map(threshold_strings).unwrap_or_default(),
                report: Some(c.counts.clone()),
                note: None,
            })
            .collect();
        let text = format!("{}# {}\n{}", self.header(), rep.denominators, render_table(&cols));
        fs::write(self.path(&format!("{stem}.txt")), text)?;
        Ok(rep)
    }

    pub fn build_model(&self, inputs: &[ConfigInput], formulation: Formulation) -> Result<PlacementModel> {
        let spec = self.spec(inputs, PlacementOptions { formulation, ..self.cfg.placement.clone() });
        Ok(match formulation {
            Formulation::Milp => build_milp(&spec)?,
            Formulation::Bilinear => build_bilinear(&spec)?,
            Formulation::Kkt => build_kkt(&spec)?,
        })
    }

    /// Writes the model for `formulation` and its statistics.
    pub fn export_model(&self, inputs: &[ConfigInput], formulation: Formulation, mps: bool) -> Result<(PathBuf, ModelStats)> {
        let pm = self.build_model(inputs, formulation)?;
        let stats = model_stats(&pm);
        let (fmt, ext) = if mps { (lpcore::ExportFormat::Mps, "mps") } else { (lpcore::ExportFormat::ModelJson, "json") };
        let text = lpcore::export_model(&pm.model, fmt)?;
        let path = self.path(&format!("model_{formulation}.{ext}"));
        fs::write(&path, text)?;
        self.write_artifact(&format!("model_{formulation}.stats.json"), "export", &stats)?;
        Ok((path, stats))
    }

    /// Side-by-side runs of every formulation, each with and without AGD.
    pub fn compare(&self, inputs: &[ConfigInput], pools: &[SampleSet]) -> Result<Comparison> {
        let base = self.cfg.placement.clone();
        let runs: Vec<(&str, PlacementOptions)> = vec![
            ("KKT", PlacementOptions { formulation: Formulation::Kkt, ..base.clone() }),
            (
                "bilinear",
                PlacementOptions { formulation: Formulation::Bilinear, discretize_fallback: true, ..base.clone() },
            ),
            ("MILP", PlacementOptions { formulation: Formulation::Milp, ..base.clone() }),
            ("MILP w/o BVR", PlacementOptions { formulation: Formulation::Milp, bvr: false, ..base.clone() }),
        ];
        let mut columns = Vec::new();
        let mut entries = Vec::new();
        for (label, opts) in runs {
            let t0 = Instant::now();
            match solve_placement(&self.spec(inputs, opts)) {
                Ok(sol) => {
                    let secs = t0.elapsed().as_secs_f64();
                    let raw = self.evaluate(&sol)?;
                    let t1 = Instant::now();
                    let refined = self.refine(&sol, pools)?;
                    let agd_secs = t1.elapsed().as_secs_f64();
                    let after = self.evaluate(&refined.solution)?;
                    for (suffix, s, rep, secs) in [("", &sol, &raw, secs), (" + AGD", &refined.solution, &after, agd_secs)] {
                        columns.push(TableColumn {
                            label: format!("{label}{suffix}"),
                            seconds: Some(secs),
                            sensors: s.sensors.clone(),
                            thresholds: s.thresholds.iter().flat_map(threshold_strings).collect(),
                            report: Some(rep.totals.clone()),
                            note: None,
                        });
                    }
                    entries.push(CompareEntry {
                        label: label.into(),
                        skipped: None,
                        solution: Some(sol),
                        agd_solution: Some(refined.solution),
                        validation: Some(raw),
                        agd_validation: Some(after),
                    });
                }
                Err(PlacementError::KktGuard { size, guard }) => {
                    let note = format!("skipped: b*r = {size} > {guard}");
                    columns.push(TableColumn {
                        label: label.into(),
                        seconds: None,
                        sensors: vec![],
                        thresholds: vec![],
                        report: None,
                        note: Some(note.clone()),
                    });
                    entries.push(CompareEntry {
                        label: label.into(),
                        skipped: Some(note),
                        solution: None,
                        agd_solution: None,
                        validation: None,
                        agd_validation: None,
                    });
                }
                Err(e) => return Err(anyhow!(e).context(format!("{label} run"))),
            }
        }
        let table = render_table(&columns);
        let cmp = Comparison { entries, table };
        self.write_artifact("compare.json", "compare", &cmp)?;
        fs::write(self.path("compare.txt"), format!("{}{}", self.header(), cmp.table))?;
        Ok(cmp)
    }

    pub fn heuristic(&self, mode: HeuristicMode) -> Result<PlacementSolution> {
        let nets: Vec<(String, Network)> = self.cases.iter().map(|c| (c.name.clone(), c.net.clone())).collect();
        Ok(heuristic_placement(&nets, mode, None, self.cfg.placement.delta)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareEntry {
    pub label: String,
    pub skipped: Option<String>,
    pub solution: Option<PlacementSolution>,
    pub agd_solution: Option<PlacementSolution>,
    pub validation: Option<ValidationReport>,
    pub agd_validation: Option<ValidationReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub entries: Vec<CompareEntry>,
    pub table: String,
}
