//! Pre-trained word vectors in the plain text format: one `token v1 ... vd`
//! line per token, optionally preceded by a `count dim` header.

use std::collections::HashMap;
use std::io::BufRead;

use super::{normalize_phrase, StopWords};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct WordVecModel {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl WordVecModel {
    pub fn from_vectors<I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let vectors: HashMap<String, Vec<f64>> = vectors.into_iter().collect();
        let dim = vectors.values().next().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Empty("word vectors"));
        }
        if let Some((t, _)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Config(format!("vector for `{t}` has the wrong dimension")));
        }
        Ok(WordVecModel { dim, vectors })
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("word vectors", e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse("word vectors", i + 1, e.to_string()))?;
            if values.is_empty() {
                return Err(Error::parse("word vectors", i + 1, "token without a vector"));
            }
            if dim == 0 {
                dim = values.len();
            } else if values.len() != dim {
                return Err(Error::parse(
                    "word vectors",
                    i + 1,
                    format!("dimension {} differs from {dim}", values.len()),
                ));
            }
            vectors.insert(crate::text::fold(fields[0]), values);
        }
        if dim == 0 {
            return Err(Error::Empty("word vectors"));
        }
        Ok(WordVecModel { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Mean of the in-vocabulary token vectors; zero when none are known.
    pub fn phrase_vector(&self, phrase: &str, stop: &StopWords) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for tok in normalize_phrase(phrase, stop) {
            if let Some(v) = self.vectors.get(&tok) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                n += 1;
            }
        }
        if n > 0 {
            for s in &mut sum {
                *s /= n as f64;
            }
        }
        sum
    }

    pub fn similarity(&self, a: &str, b: &str, stop: &StopWords) -> f64 {
        cosine(&self.phrase_vector(a, stop), &self.phrase_vector(b, stop))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::KbBuilder;
    use crate::relate::wordvec_candidates;
    use proptest::prelude::*;

    fn model() -> WordVecModel {
        let src = "4 3\nred 1 0 0\nblue 0 1 0\nfox 0 0 2\ncat 1 1 1\n";
        WordVecModel::load(src.as_bytes()).unwrap()
    }

    #[test]
    fn header_is_skipped() {
        let m = model();
        assert_eq!(m.dim(), 3);
        assert_eq!(m.get("red"), Some(&[1.0, 0.0, 0.0][..]));
    }

    #[test]
    fn ragged_file_is_rejected() {
        let err = WordVecModel::load("a 1 2\nb 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn phrase_vector_is_mean_of_known_tokens() {
        let m = model();
        let stop = StopWords::default();
        assert_eq!(m.phrase_vector("red", &stop), vec![1.0, 0.0, 0.0]);
        assert_eq!(m.phrase_vector("red blue", &stop), vec![0.5, 0.5, 0.0]);
        assert_eq!(m.phrase_vector("red zebra", &stop), vec![1.0, 0.0, 0.0]);
        assert_eq!(m.phrase_vector("zebra the", &stop), vec![0.0; 3]);
    }

    #[test]
    fn identical_label_ranks_first_and_oov_degenerates() {
        let m = model();
        let stop = StopWords::default();
        let mut b = KbBuilder::new();
        b.add_label("b", "blue fox").add_label("a", "red cat").add_label("c", "red");
        let kb = b.build().unwrap();
        let got = wordvec_candidates(&m, &kb, "Blue Fox", 3, &stop);
        assert_eq!(got[0].entity, "b");
        assert!((got[0].score - 1.0).abs() < 1e-12);

        let got = wordvec_candidates(&m, &kb, "zebra", 3, &stop);
        assert!(got.iter().all(|c| c.score == 0.0));
        let ids: Vec<_> = got.iter().map(|c| c.entity.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    proptest! {
        #[test]
        fn phrase_vector_matches_summation(words in prop::collection::vec(0usize..6, 0..8)) {
            const W: [&str; 6] = ["red", "blue", "fox", "cat", "zebra", "the"];
            let m = model();
            let stop = StopWords::default();
            let phrase = words.iter().map(|&i| W[i]).collect::<Vec<_>>().join(" ");
            let got = m.phrase_vector(&phrase, &stop);
            let known: Vec<&[f64]> = words.iter().filter_map(|&i| m.get(W[i])).collect();
            for d in 0..3 {
                let expected = if known.is_empty() {
                    0.0
                } else {
                    known.iter().map(|v| v[d]).sum::<f64>() / known.len() as f64
                };
                prop_assert!((got[d] - expected).abs() < 1e-12);
            }

            let mut reversed = words.clone();
            reversed.reverse();
            let back = m.phrase_vector(&reversed.iter().map(|&i| W[i]).collect::<Vec<_>>().join(" "), &stop);
            for d in 0..3 {
                prop_assert!((got[d] - back[d]).abs() < 1e-12);
            }
        }
    }
}
