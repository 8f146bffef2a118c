use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{NinnError, Result};
use crate::nn::{Matrix, ResNetParams, ResNetShape};

/// Number of samples propagated to estimate the hidden-layer boxes.
const BOX_SAMPLES: usize = 512;

/// Box initialization.
///
/// Each biased layer is drawn so that its neurons' hyperplanes pass through
/// random points of the box spanned by the layer's inputs (the training
/// inputs for the opening layer, propagated samples for residual layers),
/// then rescaled so the pre-activations stay inside `[-box_scale, box_scale]`
/// on that box. Rows are finally reordered by ascending bias, so the bias
/// ordering penalty starts at zero. The closing layer is uniform on
/// `[-1/√n, 1/√n]`.
pub fn box_init<R: Rng + ?Sized>(
    shape: &ResNetShape,
    samples: &[Vec<f64>],
    box_scale: f64,
    rng: &mut R,
) -> Result<ResNetParams> {
    if !(box_scale > 0.0 && box_scale.is_finite()) {
        return Err(NinnError::InvalidArgument(format!(
            "box_scale must be positive, got {box_scale}"
        )));
    }
    if samples.is_empty() || samples.iter().any(|s| s.len() != shape.input_dim) {
        return Err(NinnError::DimensionMismatch(
            "box initialization needs samples of the net input dimension".into(),
        ));
    }
    let mut net = ResNetParams::zeros(shape)?;
    let stride = samples.len().div_ceil(BOX_SAMPLES);
    let mut states: Vec<Vec<f64>> = samples.iter().step_by(stride).cloned().collect();

    let opening = net.opening_mut();
    draw_box_layer(
        &mut opening.weights,
        &mut opening.bias,
        &states,
        box_scale,
        rng,
    );
    states = states.iter().map(|x| net.opening_state(x)).collect();
    for l in 1..shape.depth - 1 {
        let layer = &mut net.hidden_mut()[l - 1];
        draw_box_layer(&mut layer.weights, &mut layer.bias, &states, box_scale, rng);
        states = states.iter().map(|y| net.residual_step(l, y)).collect();
    }
    let bound = 1.0 / (shape.width as f64).sqrt();
    for v in net.closing_mut().as_mut_slice() {
        *v = rng.random_range(-bound..=bound);
    }
    Ok(net)
}

fn draw_box_layer<R: Rng + ?Sized>(
    weights: &mut Matrix,
    bias: &mut [f64],
    inputs: &[Vec<f64>],
    box_scale: f64,
    rng: &mut R,
) {
    let dim = weights.cols();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in inputs {
        for j in 0..dim {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    let mut rows: Vec<(Vec<f64>, f64)> = (0..weights.rows())
        .map(|_| {
            // Unit normal in box-normalized coordinates and a random point
            // of the box; map back to the original coordinates.
            let mut normal: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            normal.iter_mut().for_each(|v| *v /= len);
            let mut w = vec![0.0; dim];
            let mut b = 0.0;
            for j in 0..dim {
                let span = hi[j] - lo[j];
                if span > 1e-12 {
                    let p: f64 = rng.random_range(0.0..1.0);
                    w[j] = normal[j] / span;
                    b -= w[j] * (lo[j] + p * span);
                } else {
                    // Constant input: the coordinate only shifts the bias.
                    let _: f64 = rng.random_range(0.0..1.0);
                }
            }
            // Largest |w·x + b| over the box.
            let mut max_v = b;
            let mut min_v = b;
            for j in 0..dim {
                let (a, c) = (w[j] * lo[j], w[j] * hi[j]);
                max_v += a.max(c);
                min_v += a.min(c);
            }
            let extent = max_v.abs().max(min_v.abs());
            if extent > 1e-300 {
                let k = box_scale / extent;
                w.iter_mut().for_each(|v| *v *= k);
                b *= k;
            }
            (w, b)
        })
        .collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (r, (w, b)) in rows.into_iter().enumerate() {
        weights.row_mut(r).copy_from_slice(&w);
        bias[r] = b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::training::objective::bias_order_penalty;

    fn samples() -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(0);
        (0..300)
            .map(|_| {
                vec![
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-25.0..25.0),
                    rng.random_range(0.0..50.0),
                ]
            })
            .collect()
    }

    #[test]
    fn deterministic_for_seed() {
        let shape = ResNetShape::new(3, 1, 8, 5);
        let a = box_init(&shape, &samples(), 1.0, &mut seeded_rng(4)).unwrap();
        let b = box_init(&shape, &samples(), 1.0, &mut seeded_rng(4)).unwrap();
        assert_eq!(a, b);
        let c = box_init(&shape, &samples(), 1.0, &mut seeded_rng(5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn biases_start_sorted() {
        let shape = ResNetShape::new(3, 1, 15, 7);
        let net = box_init(&shape, &samples(), 2.0, &mut seeded_rng(1)).unwrap();
        assert_eq!(bias_order_penalty(&net, 1.0), 0.0);
    }

    #[test]
    fn pre_activations_inside_box() {
        let shape = ResNetShape::new(3, 1, 10, 4);
        let xs = samples();
        let net = box_init(&shape, &xs, 1.5, &mut seeded_rng(2)).unwrap();
        for x in &xs {
            for v in net.opening().affine(x) {
                assert!(v.abs() <= 1.5 + 1e-9);
            }
            assert!(net.output(x).unwrap()[0].is_finite());
        }
    }
}
