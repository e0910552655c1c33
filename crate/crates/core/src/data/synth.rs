//! Synthetic triplet generator: a toy translation task whose ambiguous
//! source types are resolvable only through the image features.
//!
//! Every source type maps to exactly one target type, except K ambiguous
//! types which map to one of two target types depending on the triplet's
//! latent visual class. Image features carry two additive signals plus
//! Gaussian noise: a class mean (unit-separated between the two latent
//! classes, so ambiguous readings are decidable only from the images) and
//! a bag-of-attribute-types embedding (so matching images against a
//! source sentence, and recovering masked attribute words from the
//! images, are both learnable). The content directions are orthogonal to
//! the class-mean direction and class-independent, so zeroing the
//! features still leaves ambiguous readings at exactly 50/50.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::corpus::{
    write_splits, write_triplet_records, Corpus, Splits, Triplet, TripletRecord,
};
use crate::data::features::{write_features, FeatureTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    /// number of source token types
    pub n_src_types: usize,
    /// number of ambiguous source types (K), each with two target readings
    pub n_ambiguous: usize,
    /// source types (taken from the front) that double as attribute labels
    pub n_attr_types: usize,
    pub n_categories: usize,
    pub n_triplets: usize,
    pub d_img: usize,
    /// per-component Gaussian feature noise
    pub sigma: f64,
    /// fractions of triplets assigned to validation / test splits
    pub validation_frac: f64,
    pub test_frac: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_src_types: 40,
            n_ambiguous: 8,
            n_attr_types: 10,
            n_categories: 4,
            n_triplets: 500,
            d_img: 16,
            sigma: 0.1,
            validation_frac: 0.05,
            test_frac: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sigma < 0.0 {
            return Err(Error::Config("sigma must be non-negative".into()));
        }
        if self.n_src_types == 0 || self.n_triplets == 0 || self.d_img == 0 {
            return Err(Error::Config(
                "n_src_types, n_triplets and d_img must be positive".into(),
            ));
        }
        if self.n_ambiguous > self.n_src_types {
            return Err(Error::Config("n_ambiguous exceeds n_src_types".into()));
        }
        if self.n_categories == 0 {
            return Err(Error::Config("n_categories must be positive".into()));
        }
        Ok(())
    }

    pub fn src_token(&self, ty: usize) -> String {
        format!("s{ty}")
    }

    /// Ambiguous types occupy the tail of the type range.
    pub fn is_ambiguous(&self, ty: usize) -> bool {
        ty >= self.n_src_types - self.n_ambiguous
    }

    pub fn is_attribute(&self, ty: usize) -> bool {
        ty < self.n_attr_types
    }

    /// Target realization of a source type under a latent visual class.
    pub fn tgt_token(&self, ty: usize, class: usize) -> String {
        if self.is_ambiguous(ty) {
            let reading = if class == 0 { "a" } else { "b" };
            format!("t{ty}{reading}")
        } else {
            format!("t{ty}")
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Deterministic synthetic corpus. Sentences are 4-12 tokens; each
/// triplet carries 1-4 feature vectors drawn from its class Gaussian;
/// attributes are the designated source types present in the sentence.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<(Corpus, FeatureTable)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.d_img;
    // class means unit-separated: mu1 - mu0 has norm 1
    let mu = 1.0 / (d as f64).sqrt();

    // One fixed direction per attribute type (unit norm, near-orthogonal
    // to each other, exactly orthogonal to the all-ones class-mean
    // direction); derived from per-type RNGs so the main stream is not
    // consumed and generation stays deterministic in (spec, seed).
    let type_dirs: Vec<Vec<f64>> = (0..spec.n_attr_types.min(spec.n_src_types))
        .map(|ty| {
            let mut r = ChaCha8Rng::seed_from_u64(
                seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(ty as u64),
            );
            let mut dir: Vec<f64> = (0..d).map(|_| if r.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let mean = dir.iter().sum::<f64>() / d as f64;
            for x in dir.iter_mut() {
                *x -= mean;
            }
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in dir.iter_mut() {
                    *x /= norm;
                }
            }
            dir
        })
        .collect();

    let mut triplets = Vec::with_capacity(spec.n_triplets);
    let mut table = FeatureTable::new(d);

    for i in 0..spec.n_triplets {
        let class = rng.gen_range(0..2usize);
        let len = rng.gen_range(4..=12usize);
        let types: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.n_src_types)).collect();
        let src: Vec<String> = types.iter().map(|&t| spec.src_token(t)).collect();
        let tgt: Vec<String> = types.iter().map(|&t| spec.tgt_token(t, class)).collect();
        let mut attributes: Vec<String> = types
            .iter()
            .filter(|&&t| spec.is_attribute(t))
            .map(|&t| spec.src_token(t))
            .collect();
        attributes.sort();
        attributes.dedup();

        // bag-of-attribute-types content embedding: mean of the distinct
        // attribute types' directions, rescaled back to unit norm
        // (sentence without attribute tokens → zero content)
        let mut distinct: Vec<usize> = types
            .iter()
            .copied()
            .filter(|&ty| spec.is_attribute(ty))
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        let content_scale = if distinct.is_empty() {
            0.0
        } else {
            1.0 / (distinct.len() as f64).sqrt()
        };
        let content: Vec<f64> = (0..d)
            .map(|k| content_scale * distinct.iter().map(|&ty| type_dirs[ty][k]).sum::<f64>())
            .collect();

        let n_img = rng.gen_range(1..=4usize);
        let mut image_features = Vec::with_capacity(n_img);
        for j in 0..n_img {
            let fid = format!("f{i}_{j}");
            let base = if class == 0 { 0.0 } else { mu };
            let vec: Vec<f32> = (0..d)
                .map(|k| (base + content[k] + spec.sigma * gaussian(&mut rng)) as f32)
                .collect();
            image_features.push(vec.iter().map(|&x| x as f64).collect());
            table.insert(&fid, vec)?;
        }

        let id = format!("syn{i}");
        let category = format!("cat{}", i % spec.n_categories);
        triplets.push(Triplet {
            id,
            category,
            attributes,
            src_tokens: src,
            tgt_tokens: tgt,
            image_features,
        });
    }

    let n_val = (spec.n_triplets as f64 * spec.validation_frac).round() as usize;
    let n_test = (spec.n_triplets as f64 * spec.test_frac).round() as usize;
    let n_train = spec.n_triplets.saturating_sub(n_val + n_test);
    let ids: Vec<String> = triplets.iter().map(|t| t.id.clone()).collect();
    let splits = Splits {
        train: ids[..n_train].to_vec(),
        validation: ids[n_train..n_train + n_val].to_vec(),
        test: ids[n_train + n_val..].to_vec(),
    };

    let corpus = Corpus::from_triplets(triplets, splits)?;
    Ok((corpus, table))
}

/// Generate and write corpus.jsonl, features.bin and splits.json.
pub fn write_synthetic_corpus(spec: &SynthSpec, seed: u64, out_dir: &Path) -> Result<Corpus> {
    let (corpus, table) = generate_synthetic_corpus(spec, seed)?;
    std::fs::create_dir_all(out_dir)?;
    let records: Vec<TripletRecord> = corpus
        .triplets
        .iter()
        .enumerate()
        .map(|(i, t)| TripletRecord {
            id: t.id.clone(),
            category: t.category.clone(),
            attributes: t.attributes.clone(),
            src: t.src_tokens.clone(),
            tgt: t.tgt_tokens.clone(),
            feature_ids: (0..t.image_features.len()).map(|j| format!("f{i}_{j}")).collect(),
        })
        .collect();
    write_triplet_records(&records, &out_dir.join("corpus.jsonl"))?;
    write_features(&table, &out_dir.join("features.bin"))?;
    write_splits(&corpus.splits, &out_dir.join("splits.json"))?;
    Ok(corpus)
}
