use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::ranking::average_precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    /// `1 - cos(q, g)`; a zero vector has cosine 0 with everything.
    #[default]
    Cosine,
    Euclidean,
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "euclidean" => Ok(Self::Euclidean),
            other => Err(Error::invalid_config(format!("unknown distance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub rank1: f64,
    pub map: f64,
    pub evaluated: usize,
    /// Queries with no gallery item of the same identity.
    pub excluded: usize,
}

fn distance(metric: DistanceMetric, q: &[f64], g: &[f64], q_norm: f64, g_norm: f64) -> f64 {
    match metric {
        DistanceMetric::Euclidean => q
            .iter()
            .zip(g)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::Cosine => {
            if q_norm == 0.0 || g_norm == 0.0 {
                1.0
            } else {
                1.0 - q.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / (q_norm * g_norm)
            }
        }
    }
}

/// Single-query retrieval: each query ranks the whole gallery by ascending
/// distance (ties by gallery index). Rank-1 is the fraction of queries whose
/// first item has the query's id; mAP averages the AP of those rankings.
pub fn retrieval_eval<T: Scalar>(
    query: &Matrix<T>,
    gallery: &Matrix<T>,
    query_ids: &[usize],
    gallery_ids: &[usize],
    metric: DistanceMetric,
) -> Result<RetrievalResult> {
    if query.rows() != query_ids.len() || gallery.rows() != gallery_ids.len() {
        return Err(Error::Shape("embedding rows and id counts differ".into()));
    }
    if query.cols() != gallery.cols() {
        return Err(Error::Shape(format!(
            "query dim {} vs gallery dim {}",
            query.cols(),
            gallery.cols()
        )));
    }
    let to_f64 = |m: &Matrix<T>| -> Vec<Vec<f64>> {
        m.iter_rows()
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect()
    };
    let norm = |v: &Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let queries = to_f64(query);
    let items = to_f64(gallery);
    let item_norms: Vec<f64> = items.iter().map(norm).collect();

    let (mut rank1, mut map) = (0.0, 0.0);
    let (mut evaluated, mut excluded) = (0usize, 0usize);
    let mut order: Vec<usize> = (0..items.len()).collect();
    for (q, &qid) in queries.iter().zip(query_ids) {
        if !gallery_ids.contains(&qid) {
            excluded += 1;
            continue;
        }
        let q_norm = norm(q);
        let d: Vec<f64> = items
            .iter()
            .zip(&item_norms)
            .map(|(g, &gn)| distance(metric, q, g, q_norm, gn))
            .collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
        let rel: Vec<bool> = order.iter().map(|&i| gallery_ids[i] == qid).collect();
        if rel[0] {
            rank1 += 1.0;
        }
        map += average_precision(&rel)?;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Undefined("no query has a gallery match".into()));
    }
    Ok(RetrievalResult {
        rank1: rank1 / evaluated as f64,
        map: map / evaluated as f64,
        evaluated,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exact_copies_give_perfect_rank1() {
        let q = m(&[&[1.0, 0.0], &[0.0, 2.0], &[-1.0, -1.0]]);
        let g = m(&[&[0.0, 2.0], &[-1.0, -1.0], &[1.0, 0.0], &[0.3, 0.3]]);
        for metric in [DistanceMetric::Cosine, DistanceMetric::Euclidean] {
            let r = retrieval_eval(&q, &g, &[0, 1, 2], &[1, 2, 0, 3], metric).unwrap();
            assert_eq!(r.rank1, 1.0);
            assert_eq!(r.map, 1.0);
        }
    }

    #[test]
    fn two_query_fixture() {
        // euclidean distances:
        //   q0 = (0,0): g0 = 1, g1 = 2, g2 = 3
        //   q1 = (3,0): g0 = 2, g1 = 1, g2 = 0
        let q = m(&[&[0.0, 0.0], &[3.0, 0.0]]);
        let g = m(&[&[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
        let r = retrieval_eval(&q, &g, &[5, 7], &[7, 5, 5], DistanceMetric::Euclidean).unwrap();
        // q0 ranking g0,g1,g2 -> [F,T,T], AP = (1/2 + 2/3)/2
        // q1 ranking g2,g1,g0 -> [F,F,T], AP = 1/3
        assert_eq!(r.rank1, 0.0);
        let expected = ((0.5 + 2.0 / 3.0) / 2.0 + 1.0 / 3.0) / 2.0;
        assert!((r.map - expected).abs() < 1e-15);
    }

    #[test]
    fn duplicated_gallery_keeps_rank1() {
        let q = m(&[&[0.1, 0.9], &[1.0, 0.2]]);
        let g = m(&[&[0.0, 1.0], &[1.0, 0.0], &[0.5, 0.5]]);
        let ids = [0, 1, 2];
        let a = retrieval_eval(&q, &g, &[0, 1], &ids, DistanceMetric::Cosine).unwrap();
        let g2 = m(&[
            &[0.0, 1.0],
            &[1.0, 0.0],
            &[0.5, 0.5],
            &[0.0, 1.0],
            &[1.0, 0.0],
            &[0.5, 0.5],
        ]);
        let b = retrieval_eval(
            &q,
            &g2,
            &[0, 1],
            &[0, 1, 2, 0, 1, 2],
            DistanceMetric::Cosine,
        )
        .unwrap();
        assert_eq!(a.rank1, b.rank1);
    }

    #[test]
    fn unmatched_queries_are_counted() {
        let q = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let g = m(&[&[0.0, 1.0]]);
        let r = retrieval_eval(&q, &g, &[0, 9], &[0], DistanceMetric::Cosine).unwrap();
        assert_eq!((r.evaluated, r.excluded, r.rank1), (1, 1, 1.0));
        assert!(matches!(
            retrieval_eval(&q, &g, &[8, 9], &[0], DistanceMetric::Cosine),
            Err(Error::Undefined(_))
        ));
    }
}
