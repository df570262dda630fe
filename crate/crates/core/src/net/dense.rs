use crate::error::{Error, Result};

/// Affine head `W h + b` with `W` stored row-major `out x in`.
pub fn dense_forward(h: &[f64], w: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if b.is_empty() || w.len() != b.len() * h.len() {
        return Err(Error::Shape(format!(
            "dense: weight {} for input {} and output {}",
            w.len(),
            h.len(),
            b.len()
        )));
    }
    Ok(w.chunks_exact(h.len())
        .zip(b)
        .map(|(row, bi)| bi + super::linalg::dot(row, h))
        .collect())
}

pub struct DenseGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub input: Vec<f64>,
}

pub fn dense_backward(h: &[f64], w: &[f64], grad_out: &[f64]) -> DenseGrads {
    let mut g = DenseGrads {
        w: vec![0.0; w.len()],
        b: grad_out.to_vec(),
        input: vec![0.0; h.len()],
    };
    super::linalg::outer_acc(grad_out, h, &mut g.w);
    super::linalg::matvec_t_acc(w, grad_out, &mut g.input);
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let h = [0.3, -0.7, 2.0];
        assert_eq!(
            dense_forward(&h, &[0.0; 6], &[1.0, 2.0]).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            dense_forward(&[0.0; 3], &[0.4; 6], &[1.0, 2.0]).unwrap(),
            vec![1.0, 2.0]
        );
        let w = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(
            dense_forward(&h, &w, &[1.0, 2.0]).unwrap(),
            vec![1.3, 2.0 - 0.7]
        );
        assert!(dense_forward(&h, &[0.0; 5], &[1.0, 2.0]).is_err());
    }
}
