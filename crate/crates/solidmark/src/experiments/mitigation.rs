//! Inference-time mitigation methods re-evaluated by the key-matching test.
//!
//! GNI perturbs the condition embedding; the caption-space methods rewrite
//! the prompt before embedding: random token replacement and addition (RT),
//! caption word repetition (CWR), and random number addition (RNA, integers
//! drawn from {0, ..., 10^6}).

use crate::diffusion::{embed_caption, perturb_condition_gni};
use crate::error::{Error, Result};
use crate::eval::OutpaintQuery;
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Mitigation {
    /// Gaussian noise at inference on the condition embedding.
    Gni { magnitude: f64 },
    /// Random token replacement and addition over `iterations` passes.
    Rt { iterations: usize },
    /// Caption word repetition: one word re-inserted at a random spot per
    /// iteration.
    Cwr { iterations: usize },
    /// Random numbers in {0, ..., 10^6} appended at random spots.
    Rna { iterations: usize },
}

impl Mitigation {
    pub fn label(&self) -> String {
        match self {
            Mitigation::Gni { magnitude } => format!("gni{magnitude}"),
            Mitigation::Rt { iterations } => format!("rt{iterations}"),
            Mitigation::Cwr { iterations } => format!("cwr{iterations}"),
            Mitigation::Rna { iterations } => format!("rna{iterations}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Mitigation::Gni { magnitude } = self {
            if *magnitude < 0.0 {
                return Err(Error::Config("GNI magnitude must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Produce the condition embedding for a query under this method. The
    /// random stream is a pure function of `(seed, query id, trial seed)`.
    pub fn condition(&self, query: &OutpaintQuery<'_>, seed: u64) -> Result<Vec<f32>> {
        self.validate()?;
        let stream_seed = rng::sub_seed(
            seed,
            &["mitigation", query.id, &query.trial_seed.to_string()],
        );
        match self {
            Mitigation::Gni { magnitude } => {
                let cond = embed_caption(query.caption)?;
                perturb_condition_gni(&cond, *magnitude, stream_seed)
            }
            _ => {
                let rewritten = transform_caption(query.caption, self, stream_seed)?;
                embed_caption(&rewritten)
            }
        }
    }
}

/// Filler vocabulary for random token replacement.
const RANDOM_WORDS: [&str; 16] = [
    "lantern", "gravel", "harbor", "velvet", "prism", "thicket", "ember", "quartz", "meadow",
    "cobalt", "drizzle", "parapet", "saffron", "tundra", "mosaic", "garnet",
];

/// Apply a caption-space mitigation transform. GNI is embedding-space and is
/// rejected here.
pub fn transform_caption(caption: &str, method: &Mitigation, seed: u64) -> Result<String> {
    let mut stream = rng::stream(seed, &["caption-transform"]);
    let mut words: Vec<String> = caption.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        words.push(String::new());
    }
    match method {
        Mitigation::Gni { .. } => {
            return Err(Error::Config(
                "GNI operates on embeddings, not captions".into(),
            ))
        }
        Mitigation::Rt { iterations } => {
            for _ in 0..*iterations {
                // Each token has an independent chance to be replaced, then
                // one random word is added at a random spot.
                for w in &mut words {
                    if stream.gen_bool(0.25) {
                        *w = RANDOM_WORDS[stream.gen_range(0..RANDOM_WORDS.len())].to_string();
                    }
                }
                let insert = RANDOM_WORDS[stream.gen_range(0..RANDOM_WORDS.len())].to_string();
                let at = stream.gen_range(0..=words.len());
                words.insert(at, insert);
            }
        }
        Mitigation::Cwr { iterations } => {
            for _ in 0..*iterations {
                let word = words[stream.gen_range(0..words.len())].clone();
                let at = stream.gen_range(0..=words.len());
                words.insert(at, word);
            }
        }
        Mitigation::Rna { iterations } => {
            for _ in 0..*iterations {
                let number: u32 = stream.gen_range(0..=1_000_000);
                let at = stream.gen_range(0..=words.len());
                words.insert(at, number.to_string());
            }
        }
    }
    Ok(words.join(" "))
}
