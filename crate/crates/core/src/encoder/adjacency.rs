use super::EncoderError;
use crate::numerics::CsrMatrix;

fn check_input(a: &CsrMatrix) -> Result<(), EncoderError> {
    if a.rows() != a.cols() || !a.is_symmetric() {
        return Err(EncoderError::Asymmetric);
    }
    if (0..a.rows()).any(|i| a.get(i, i) != 0.0) {
        return Err(EncoderError::NonZeroDiagonal);
    }
    Ok(())
}

/// `D^{-1/2}(A + I)D^{-1/2}` with `dᵢ = 1 + Σⱼ Aᵢⱼ`.
pub fn normalize_adjacency(a: &CsrMatrix) -> Result<CsrMatrix, EncoderError> {
    check_input(a)?;
    let n = a.rows();
    let deg: Vec<f64> = (0..n).map(|i| 1.0 + a.row(i).map(|(_, v)| v).sum::<f64>()).collect();
    let mut triplets = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        triplets.push((i, i, 1.0 / deg[i]));
        for (j, v) in a.row(i) {
            triplets.push((i, j, v / (deg[i] * deg[j]).sqrt()));
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, &triplets)?)
}

/// Row `i` averages the neighbours of `i`; isolated nodes get an empty row.
pub fn mean_aggregation(a: &CsrMatrix) -> Result<CsrMatrix, EncoderError> {
    check_input(a)?;
    let mut triplets = Vec::with_capacity(a.nnz());
    for i in 0..a.rows() {
        let deg = a.row_nnz(i);
        for (j, _) in a.row(i) {
            triplets.push((i, j, 1.0 / deg as f64));
        }
    }
    Ok(CsrMatrix::from_triplets(a.rows(), a.cols(), &triplets)?)
}
