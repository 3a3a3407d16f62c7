use crate::error::{Error, Result};
use crate::model::FilterBank;
use crate::tensor::Scalar;

/// Distance between a layer's first- and second-level filters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSimilarity {
    pub layer: String,
    /// Mean absolute elementwise difference of the raw weights.
    pub mae: f64,
    /// Mean over filters of the cosine between each flattened filter pair.
    pub cosine: f64,
    pub elements: usize,
    /// Filters that entered the cosine mean.
    pub filters: usize,
    /// Filters excluded because either side has zero norm.
    pub zero_norm: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityReport {
    pub layers: Vec<LayerSimilarity>,
    /// MAE over every weight of every layer.
    pub mae_weighted: f64,
    /// Mean of the per-layer MAEs.
    pub mae_unweighted: f64,
    /// Cosine averaged over every filter of every layer.
    pub cosine_weighted: f64,
    /// Mean of the per-layer cosines.
    pub cosine_unweighted: f64,
    pub zero_norm: usize,
}

impl SimilarityReport {
    /// `layer,mae,cosine` rows followed by the two aggregates.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,mae,cosine\n");
        for l in &self.layers {
            s.push_str(&format!("{},{:.8},{:.8}\n", l.layer, l.mae, l.cosine));
        }
        s.push_str(&format!(
            "aggregate_weighted,{:.8},{:.8}\n",
            self.mae_weighted, self.cosine_weighted
        ));
        s.push_str(&format!(
            "aggregate_unweighted,{:.8},{:.8}\n",
            self.mae_unweighted, self.cosine_unweighted
        ));
        s
    }
}

/// MAE and filter-wise cosine similarity between two banks of equal shape.
/// Only the weights are compared.
pub fn filter_similarity<T: Scalar>(a: &FilterBank<T>, b: &FilterBank<T>) -> Result<LayerSimilarity> {
    if a.weights.dims() != b.weights.dims() {
        return Err(Error::dims(
            "filter_similarity",
            format!("{} vs {}", a.weights.dims(), b.weights.dims()),
        ));
    }
    let (wa, wb) = (a.weights.data(), b.weights.data());
    let per = wa.len() / a.c_out();
    let mut abs = 0.0;
    let mut cos_sum = 0.0;
    let mut filters = 0;
    let mut zero_norm = 0;
    for o in 0..a.c_out() {
        let (fa, fb) = (&wa[o * per..(o + 1) * per], &wb[o * per..(o + 1) * per]);
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (&x, &y) in fa.iter().zip(fb) {
            let (x, y) = (x.as_f64(), y.as_f64());
            abs += (x - y).abs();
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na == 0.0 || nb == 0.0 {
            zero_norm += 1;
            continue;
        }
        cos_sum += (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
        filters += 1;
    }
    Ok(LayerSimilarity {
        layer: String::new(),
        mae: abs / wa.len() as f64,
        cosine: if filters > 0 { cos_sum / filters as f64 } else { f64::NAN },
        elements: wa.len(),
        filters,
        zero_norm,
    })
}

/// Per-layer similarity for `(name, first, second)` triples plus aggregates.
pub fn network_similarity<T: Scalar>(
    layers: impl IntoIterator<Item = (String, FilterBank<T>, FilterBank<T>)>,
) -> Result<SimilarityReport> {
    let mut out = Vec::new();
    for (name, a, b) in layers {
        let mut s = filter_similarity(&a, &b)?;
        s.layer = name;
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::Config("similarity of an empty layer list".into()));
    }
    let elements: usize = out.iter().map(|l| l.elements).sum();
    let filters: usize = out.iter().map(|l| l.filters).sum();
    let mae_weighted = out.iter().map(|l| l.mae * l.elements as f64).sum::<f64>() / elements as f64;
    let mae_unweighted = out.iter().map(|l| l.mae).sum::<f64>() / out.len() as f64;
    let with_cos: Vec<&LayerSimilarity> = out.iter().filter(|l| l.filters > 0).collect();
    let cosine_weighted = with_cos.iter().map(|l| l.cosine * l.filters as f64).sum::<f64>() / filters as f64;
    let cosine_unweighted = with_cos.iter().map(|l| l.cosine).sum::<f64>() / with_cos.len() as f64;
    let zero_norm = out.iter().map(|l| l.zero_norm).sum();
    Ok(SimilarityReport {
        layers: out,
        mae_weighted,
        mae_unweighted,
        cosine_weighted,
        cosine_unweighted,
        zero_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn bank(w: Vec<f64>, c_out: usize) -> FilterBank<f64> {
        let per = w.len() / c_out;
        FilterBank::new(
            Tensor::new([c_out, per, 1, 1], w).unwrap(),
            Tensor::zeros([1, c_out, 1, 1]),
        )
        .unwrap()
    }

    #[test]
    fn identical_and_negated() {
        let a = bank(vec![1.0, 2.0, -3.0, 0.5], 2);
        let s = filter_similarity(&a, &a).unwrap();
        assert_eq!(s.mae, 0.0);
        assert!((s.cosine - 1.0).abs() < 1e-15);
        let neg = bank(vec![-1.0, -2.0, 3.0, -0.5], 2);
        assert!((filter_similarity(&a, &neg).unwrap().cosine + 1.0).abs() < 1e-15);
    }

    #[test]
    fn toy_bank_matches_scalar_loop() {
        let a = bank(vec![1.0, 0.0, 2.0, 3.0, -1.0, 1.0], 2);
        let b = bank(vec![1.1, 0.2, 1.9, 3.0, -1.5, 0.5], 2);
        let s = filter_similarity(&a, &b).unwrap();
        // Flat oracle.
        let (wa, wb) = (a.weights.data(), b.weights.data());
        let mut mae = 0.0;
        for i in 0..6 {
            mae += (wa[i] - wb[i]).abs();
        }
        mae /= 6.0;
        let cos = |x: &[f64], y: &[f64]| {
            let d: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|p| p * p).sum::<f64>().sqrt();
            d / (nx * ny)
        };
        let c = 0.5 * (cos(&wa[..3], &wb[..3]) + cos(&wa[3..], &wb[3..]));
        assert!((s.mae - mae).abs() < 1e-15);
        assert!((s.cosine - c).abs() < 1e-15);
    }

    #[test]
    fn zero_norm_filters_are_counted_not_averaged() {
        let a = bank(vec![0.0, 0.0, 1.0, 2.0], 2);
        let b = bank(vec![1.0, 1.0, 1.0, 2.0], 2);
        let s = filter_similarity(&a, &b).unwrap();
        assert_eq!(s.zero_norm, 1);
        assert_eq!(s.filters, 1);
        assert!((s.cosine - 1.0).abs() < 1e-15);
    }

    #[test]
    fn aggregates() {
        let a = bank(vec![1.0, 1.0], 1);
        let b = bank(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3);
        let r = network_similarity(vec![
            ("x".to_string(), a.clone(), a.map_weights(|v| v + 1.0)),
            ("y".to_string(), b.clone(), b.clone()),
        ])
        .unwrap();
        assert!((r.mae_unweighted - 0.5).abs() < 1e-15);
        assert!((r.mae_weighted - 2.0 / 8.0).abs() < 1e-15);
        assert!(r.to_csv().starts_with("layer,mae,cosine\nx,"));
    }

    impl FilterBank<f64> {
        fn map_weights(&self, f: impl Fn(f64) -> f64) -> Self {
            FilterBank::new(self.weights.map(f), self.bias.clone()).unwrap()
        }
    }

    proptest! {
        #[test]
        fn mae_symmetric_and_cosine_scale_invariant(
            wa in proptest::collection::vec(-1.0f64..1.0, 12),
            wb in proptest::collection::vec(-1.0f64..1.0, 12),
            scales in proptest::collection::vec(0.1f64..10.0, 3),
        ) {
            let a = bank(wa, 3);
            let b = bank(wb, 3);
            let ab = filter_similarity(&a, &b).unwrap();
            let ba = filter_similarity(&b, &a).unwrap();
            prop_assert!((ab.mae - ba.mae).abs() < 1e-15);
            let scaled = FilterBank::new(
                Tensor::from_fn(a.weights.dims(), |i| a.weights.data()[i] * scales[i / 4]),
                a.bias.clone(),
            ).unwrap();
            let sb = filter_similarity(&scaled, &b).unwrap();
            prop_assert!((sb.cosine - ab.cosine).abs() < 1e-12);
        }
    }
}
