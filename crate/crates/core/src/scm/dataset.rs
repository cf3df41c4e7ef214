use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{InterventionSpec, ModelName, NormalScale, StructuralModel, VariableKind};
use crate::error::{Error, Result};
use crate::io;

/// A `K x N` sample matrix with its column schema and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub kinds: Vec<VariableKind>,
    pub data: Array2<f64>,
    pub intervention: InterventionSpec,
    pub seed: u64,
}

/// JSON sidecar written next to every dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub model: ModelName,
    pub label: String,
    pub intervention: InterventionSpec,
    pub seed: u64,
    pub rows: usize,
    pub normal_scale: NormalScale,
    pub cutoffs: BTreeMap<String, f64>,
    pub domain_ranges: BTreeMap<String, (f64, f64)>,
}

/// Index of a generated corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub model: ModelName,
    pub per_intervention_count: usize,
    pub seed: u64,
    pub files: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn num_vars(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).to_vec()
    }

    fn subset(&self, rows: std::ops::Range<usize>) -> Dataset {
        Dataset {
            data: self.data.slice(s![rows, ..]).to_owned(),
            ..self.clone_schema()
        }
    }

    fn clone_schema(&self) -> Dataset {
        Dataset {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            data: Array2::zeros((0, self.num_vars())),
            intervention: self.intervention.clone(),
            seed: self.seed,
        }
    }

    /// First 80% of rows for training, the rest held out.
    pub fn train_test_split(&self) -> (Dataset, Dataset) {
        let cut = self.len() * 4 / 5;
        (self.subset(0..cut), self.subset(cut..self.len()))
    }

    pub fn meta(&self, model: &StructuralModel) -> DatasetMeta {
        DatasetMeta {
            model: model.name,
            label: self.intervention.label(model),
            intervention: self.intervention.clone(),
            seed: self.seed,
            rows: self.len(),
            normal_scale: model.options.normal_scale,
            cutoffs: model.calibration.cutoffs.clone(),
            domain_ranges: model
                .variables
                .iter()
                .map(|v| (v.name.clone(), v.domain_range))
                .collect(),
        }
    }

    /// CSV bytes: header of names, a row of kind tags, then data rows.
    /// Values use the shortest decimal form that round-trips exactly.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        let tags = self.kinds.iter().map(VariableKind::tag).collect();
        let rows = self.data.rows().into_iter().map(|r| {
            r.iter()
                .zip(&self.kinds)
                .map(|(v, k)| if k.is_discrete() { format!("{}", *v as i64) } else { format!("{v}") })
                .collect()
        });
        io::csv_bytes(&header, std::iter::once(tags).chain(rows))
    }

    pub fn write(&self, dir: &Path, stem: &str, model: &StructuralModel) -> Result<()> {
        io::write_atomic(&dir.join(format!("{stem}.csv")), &self.to_csv()?)?;
        io::write_json(&dir.join(format!("{stem}.json")), &self.meta(model))
    }

    /// Reads a CSV written by [`Dataset::write`] together with its sidecar.
    pub fn read(dir: &Path, stem: &str, model: &StructuralModel) -> Result<Dataset> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let meta: DatasetMeta = io::read_json(&dir.join(format!("{stem}.json")))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(&csv_path)
            .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if names != model.names() {
            return Err(Error::Schema(format!(
                "{}: columns {names:?} do not match model {}",
                csv_path.display(),
                model.name
            )));
        }
        let mut records = reader.records();
        let tags = records
            .next()
            .ok_or_else(|| Error::Data(format!("{}: missing kind row", csv_path.display())))?
            .map_err(|e| Error::Data(e.to_string()))?;
        let kinds = model.kinds();
        for (tag, kind) in tags.iter().zip(&kinds) {
            if tag != kind.tag() {
                return Err(Error::Schema(format!("kind tag `{tag}` does not match `{}`", kind.tag())));
            }
        }
        let mut values = Vec::with_capacity(meta.rows * names.len());
        for rec in records {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            for cell in rec.iter() {
                values.push(
                    cell.parse::<f64>()
                        .map_err(|_| Error::Data(format!("{}: bad number `{cell}`", csv_path.display())))?,
                );
            }
        }
        let n = names.len();
        let rows = values.len() / n;
        if rows != meta.rows {
            return Err(Error::Data(format!(
                "{}: expected {} rows, found {rows}",
                csv_path.display(),
                meta.rows
            )));
        }
        let data = Array2::from_shape_vec((rows, n), values).map_err(|e| Error::Data(e.to_string()))?;
        Ok(Dataset {
            names,
            kinds,
            data,
            intervention: meta.intervention,
            seed: meta.seed,
        })
    }
}

/// Writes a corpus with its manifest, one CSV + sidecar per dataset.
pub fn write_corpus_dir(
    dir: &Path,
    model: &StructuralModel,
    corpus: &[Dataset],
    per_intervention_count: usize,
    seed: u64,
) -> Result<CorpusManifest> {
    let mut files = Vec::new();
    for d in corpus {
        let stem = d.intervention.file_stem(model);
        d.write(dir, &stem, model)?;
        files.push(stem);
    }
    let manifest = CorpusManifest {
        model: model.name,
        per_intervention_count,
        seed,
        files,
    };
    io::write_json(&dir.join("corpus.json"), &manifest)?;
    Ok(manifest)
}

/// Loads a corpus written by [`write_corpus_dir`] against `model`'s schema.
pub fn read_corpus_dir(dir: &Path, model: &StructuralModel) -> Result<(CorpusManifest, Vec<Dataset>)> {
    let manifest: CorpusManifest = io::read_json(&dir.join("corpus.json"))?;
    if manifest.model != model.name {
        return Err(Error::Schema(format!(
            "corpus is for {}, expected {}",
            manifest.model, model.name
        )));
    }
    let datasets = manifest
        .files
        .iter()
        .map(|stem| Dataset::read(dir, stem, model))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, datasets))
}
