/// Matérn covariance with smoothness 5/2 and per-dimension length scales.
pub fn matern52(a: &[f64], b: &[f64], signal_var: f64, length_scales: &[f64]) -> f64 {
    let rho = scaled_distance(a, b, length_scales);
    matern52_rho(rho, signal_var)
}

pub fn matern52_rho(rho: f64, signal_var: f64) -> f64 {
    let s = 5f64.sqrt() * rho;
    signal_var * (1.0 + s + s * s / 3.0) * (-s).exp()
}

pub fn scaled_distance(a: &[f64], b: &[f64], length_scales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_points_give_signal_variance() {
        assert_eq!(matern52(&[0.3, 1.0, -2.0], &[0.3, 1.0, -2.0], 2.5, &[1.0, 0.1, 3.0]), 2.5);
    }

    #[test]
    fn unit_distance_value() {
        let s5 = 5f64.sqrt();
        let expect = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        let k = matern52(&[0.0, 0.0, 0.0], &[0.6, 0.0, 0.8], 1.0, &[1.0, 1.0, 1.0]);
        assert!((k - expect).abs() < 1e-15);
        let k = matern52(&[0.0, 0.0, 0.0], &[0.0, 2.0, 0.0], 1.0, &[1.0, 2.0, 1.0]);
        assert!((k - expect).abs() < 1e-15);
    }

    #[test]
    fn decays_with_distance() {
        let ls = [0.5, 0.5];
        let mut prev = f64::INFINITY;
        for d in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let k = matern52(&[0.0, 0.0], &[d, 0.0], 1.0, &ls);
            assert!(k < prev);
            prev = k;
        }
        assert!(matern52(&[0.0], &[1e3], 1.0, &[1.0]) < 1e-300);
    }
}
