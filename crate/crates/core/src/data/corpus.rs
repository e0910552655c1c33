//! Corpus files: one JSON triplet per line, plus a JSON splits file.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::features::{load_image_features, FeatureTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripletRecord {
    pub id: String,
    pub category: String,
    pub attributes: Vec<String>,
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub feature_ids: Vec<String>,
}

/// One training sample with its resolved image feature vectors.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub id: String,
    pub category: String,
    pub attributes: Vec<String>,
    pub src_tokens: Vec<String>,
    pub tgt_tokens: Vec<String>,
    pub image_features: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub triplets: Vec<Triplet>,
    pub splits: Splits,
    pub by_id: HashMap<String, usize>,
    /// category -> indices into triplets
    pub category_index: HashMap<String, Vec<usize>>,
    /// sorted attribute label -> attribute id
    pub attribute_vocab: Vec<String>,
    pub d_img: usize,
}

impl Corpus {
    pub fn from_triplets(triplets: Vec<Triplet>, splits: Splits) -> Result<Self> {
        let mut by_id = HashMap::new();
        let mut category_index: HashMap<String, Vec<usize>> = HashMap::new();
        let mut attrs: Vec<String> = Vec::new();
        let mut d_img = 0;
        for (i, t) in triplets.iter().enumerate() {
            if t.image_features.is_empty() {
                return Err(Error::Load(format!(
                    "triplet {:?} has no image features",
                    t.id
                )));
            }
            d_img = t.image_features[0].len();
            if by_id.insert(t.id.clone(), i).is_some() {
                return Err(Error::Load(format!("duplicate triplet id {:?}", t.id)));
            }
            category_index.entry(t.category.clone()).or_default().push(i);
            attrs.extend(t.attributes.iter().cloned());
        }
        attrs.sort();
        attrs.dedup();
        for split in [&splits.train, &splits.validation, &splits.test] {
            for id in split {
                if !by_id.contains_key(id) {
                    return Err(Error::Load(format!("split references unknown id {id:?}")));
                }
            }
        }
        Ok(Corpus {
            triplets,
            splits,
            by_id,
            category_index,
            attribute_vocab: attrs,
            d_img,
        })
    }

    pub fn attribute_id(&self, label: &str) -> Option<usize> {
        self.attribute_vocab.binary_search_by(|a| a.as_str().cmp(label)).ok()
    }

    pub fn split_indices(&self, ids: &[String]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Load(format!("split references unknown triplet id {id:?}")))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

pub fn read_triplet_records(path: &Path) -> Result<Vec<TripletRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripletRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Load(format!("corpus line {}: {e}", lineno + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_triplet_records(records: &[TripletRecord], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_splits(path: &Path) -> Result<Splits> {
    let data = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&data)?)
}

pub fn write_splits(splits: &Splits, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(splits)?)?;
    Ok(())
}

fn resolve(records: Vec<TripletRecord>, features: &FeatureTable) -> Result<Vec<Triplet>> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let mut image_features = Vec::with_capacity(rec.feature_ids.len());
        for fid in &rec.feature_ids {
            let v = features.get(fid).ok_or_else(|| {
                Error::Load(format!(
                    "triplet {:?} references missing feature id {fid:?}",
                    rec.id
                ))
            })?;
            image_features.push(v.iter().map(|&x| x as f64).collect());
        }
        out.push(Triplet {
            id: rec.id,
            category: rec.category,
            attributes: rec.attributes,
            src_tokens: rec.src,
            tgt_tokens: rec.tgt,
            image_features,
        });
    }
    Ok(out)
}

/// Load a corpus from a JSONL triplet file, a binary feature file and an
/// optional splits file (default: everything in train).
pub fn load_corpus(corpus_path: &Path, features_path: &Path, splits_path: Option<&Path>) -> Result<Corpus> {
    let records = read_triplet_records(corpus_path)?;
    let features = load_image_features(features_path)?;
    let triplets = resolve(records, &features)?;
    let splits = match splits_path {
        Some(p) => read_splits(p)?,
        None => Splits {
            train: triplets.iter().map(|t| t.id.clone()).collect(),
            ..Default::default()
        },
    };
    Corpus::from_triplets(triplets, splits)
}
