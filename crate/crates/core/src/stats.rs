/// Sample mean, standard deviation and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub stderr: f64,
}

impl SampleStats {
    /// Two-pass estimate; the variance uses the `n - 1` denominator.
    pub fn from_slice(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                std_dev: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self {
                n,
                mean,
                std_dev: 0.0,
                stderr: 0.0,
            };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std_dev = var.sqrt();
        Self {
            n,
            mean,
            std_dev,
            stderr: std_dev / (n as f64).sqrt(),
        }
    }

    /// From running sums of `x` and `x^2`; negative variance from rounding is clamped.
    pub fn from_sums(n: usize, sum: f64, sum_sq: f64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        let std_dev = var.sqrt();
        Self {
            n,
            mean,
            std_dev,
            stderr: std_dev / nf.sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let s = SampleStats::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.stderr - s.std_dev / 2.0).abs() < 1e-15);
        let t = SampleStats::from_sums(4, 10.0, 30.0);
        assert!((t.std_dev - s.std_dev).abs() < 1e-14);
        assert_eq!(SampleStats::from_slice(&[7.0]).stderr, 0.0);
        assert_eq!(SampleStats::from_sums(3, 3.0, 3.0 - 1e-17).std_dev, 0.0);
    }
}
