use serde::{Deserialize, Serialize};

use super::ContrastiveError;
use crate::numerics::{dot, DenseMatrix, LogitGroup, LogitTerm, Tape, Var};

/// How many other nodes of the batch serve as negatives for each target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "NegativesRepr", into = "NegativesRepr")]
pub enum Negatives {
    /// Every other node in the batch.
    #[default]
    All,
    Count(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NegativesRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<NegativesRepr> for Negatives {
    type Error = String;

    fn try_from(r: NegativesRepr) -> Result<Self, String> {
        match r {
            NegativesRepr::Count(n) => Ok(Self::Count(n)),
            NegativesRepr::Word(w) if w == "all" => Ok(Self::All),
            NegativesRepr::Word(w) => Err(format!("expected \"all\" or an integer, got {w:?}")),
        }
    }
}

impl From<Negatives> for NegativesRepr {
    fn from(n: Negatives) -> Self {
        match n {
            Negatives::All => Self::Word("all".into()),
            Negatives::Count(k) => Self::Count(k),
        }
    }
}

impl Negatives {
    /// Number of negatives for a target in a batch of `batch_len` nodes.
    pub fn resolve(self, batch_len: usize) -> usize {
        let others = batch_len.saturating_sub(1);
        match self {
            Self::All => others,
            Self::Count(k) => k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub temperature: f64,
    pub negatives_per_target: Negatives,
    /// Divide negative similarities by the temperature too. Off gives the
    /// literal form with bare negative exponents.
    pub tau_on_negatives: bool,
    /// Average with the loss that anchors on the augmented view.
    pub symmetric_views: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            negatives_per_target: Negatives::All,
            tau_on_negatives: true,
            symmetric_views: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ContrastiveError> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(ContrastiveError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.negatives_per_target == Negatives::Count(0) {
            return Err(ContrastiveError::Config(
                "negatives_per_target must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn positive_scale(&self) -> f64 {
        1.0 / self.temperature
    }

    fn negative_scale(&self) -> f64 {
        if self.tau_on_negatives {
            1.0 / self.temperature
        } else {
            1.0
        }
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64, ContrastiveError> {
    if u.len() != v.len() {
        return Err(ContrastiveError::LengthMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn term(source: Var, row: usize, col: usize, scale: f64) -> LogitTerm {
    LogitTerm {
        source,
        row,
        col,
        scale,
    }
}

/// InfoNCE for one target on the tape.
///
/// `anchor` and `positive` are `1 x d`; `negatives_orig` and `negatives_aug`
/// are `M x d`, row `j` holding the two views of the `j`-th negative node.
pub fn info_nce(
    tape: &mut Tape,
    anchor: Var,
    positive: Var,
    negatives_orig: Var,
    negatives_aug: Var,
    cfg: &LossConfig,
) -> Result<Var, ContrastiveError> {
    cfg.validate()?;
    let m = tape.value(negatives_orig).rows();
    if m == 0 {
        return Err(ContrastiveError::NoNegatives);
    }
    let d = tape.value(anchor).cols();
    for v in [positive, negatives_orig, negatives_aug] {
        if tape.value(v).cols() != d {
            return Err(ContrastiveError::LengthMismatch(d, tape.value(v).cols()));
        }
    }
    if tape.value(anchor).rows() != 1 || tape.value(positive).rows() != 1 || tape.value(negatives_aug).rows() != m {
        return Err(ContrastiveError::Config("info_nce operand row counts".into()));
    }

    let a = tape.l2_normalize_rows(anchor)?;
    let p = tape.l2_normalize_rows(positive)?;
    let no = tape.l2_normalize_rows(negatives_orig)?;
    let na = tape.l2_normalize_rows(negatives_aug)?;
    let (ps, ns) = (cfg.positive_scale(), cfg.negative_scale());

    let mut groups = Vec::with_capacity(2);
    let mut one_way = |tape: &mut Tape, anchor: Var, positive: Var| -> Result<(), ContrastiveError> {
        let s_pos = tape.matmul_transpose_b(anchor, positive)?;
        let s_no = tape.matmul_transpose_b(anchor, no)?;
        let s_na = tape.matmul_transpose_b(anchor, na)?;
        let mut terms = vec![term(s_pos, 0, 0, ps)];
        for j in 0..m {
            terms.push(term(s_no, 0, j, ns));
            terms.push(term(s_na, 0, j, ns));
        }
        groups.push(LogitGroup { terms });
        Ok(())
    };
    one_way(tape, a, p)?;
    if cfg.symmetric_views {
        one_way(tape, p, a)?;
    }
    Ok(tape.softmax_cross_entropy(groups)?)
}

/// Scalar InfoNCE for plain vectors.
pub fn info_nce_value(
    anchor: &[f64],
    positive: &[f64],
    negatives_orig: &[Vec<f64>],
    negatives_aug: &[Vec<f64>],
    cfg: &LossConfig,
) -> Result<f64, ContrastiveError> {
    if negatives_orig.len() != negatives_aug.len() {
        return Err(ContrastiveError::LengthMismatch(
            negatives_orig.len(),
            negatives_aug.len(),
        ));
    }
    if negatives_orig.is_empty() {
        return Err(ContrastiveError::NoNegatives);
    }
    let mut tape = Tape::new();
    let a = tape.constant(DenseMatrix::row_vector(anchor));
    let p = tape.constant(DenseMatrix::row_vector(positive));
    let no = tape.constant(DenseMatrix::from_rows(negatives_orig)?);
    let na = tape.constant(DenseMatrix::from_rows(negatives_aug)?);
    let loss = info_nce(&mut tape, a, p, no, na, cfg)?;
    Ok(tape.value(loss).get(0, 0))
}

/// Mean InfoNCE over the targets of one batch.
///
/// `z_orig` and `z_aug` are the `N x out` encoder outputs of the two views.
/// `negatives[p]` lists batch positions used as negatives for the target at
/// position `p`; it must not contain `p` itself.
pub fn batch_info_nce(
    tape: &mut Tape,
    z_orig: Var,
    z_aug: Var,
    batch: &[usize],
    negatives: &[Vec<usize>],
    cfg: &LossConfig,
) -> Result<Var, ContrastiveError> {
    if negatives.len() != batch.len() {
        return Err(ContrastiveError::Config("one negative list per target".into()));
    }
    let u = tape.gather_rows(z_orig, batch)?;
    let u = tape.l2_normalize_rows(u)?;
    let v = tape.gather_rows(z_aug, batch)?;
    let v = tape.l2_normalize_rows(v)?;
    let s_uv = tape.matmul_transpose_b(u, v)?;
    let s_uu = tape.matmul_transpose_b(u, u)?;
    let s_vv = if cfg.symmetric_views {
        Some(tape.matmul_transpose_b(v, v)?)
    } else {
        None
    };
    let (ps, ns) = (cfg.positive_scale(), cfg.negative_scale());

    let mut groups = Vec::with_capacity(batch.len() * if cfg.symmetric_views { 2 } else { 1 });
    for (p, negs) in negatives.iter().enumerate() {
        if negs.is_empty() {
            return Err(ContrastiveError::NoNegatives);
        }
        if negs.contains(&p) {
            return Err(ContrastiveError::Config(format!(
                "target at batch position {p} listed as its own negative"
            )));
        }
        let mut terms = Vec::with_capacity(1 + 2 * negs.len());
        terms.push(term(s_uv, p, p, ps));
        for &j in negs {
            terms.push(term(s_uu, p, j, ns));
            terms.push(term(s_uv, p, j, ns));
        }
        groups.push(LogitGroup { terms });
        if let Some(s_vv) = s_vv {
            let mut terms = Vec::with_capacity(1 + 2 * negs.len());
            terms.push(term(s_uv, p, p, ps));
            for &j in negs {
                terms.push(term(s_vv, p, j, ns));
                terms.push(term(s_uv, j, p, ns));
            }
            groups.push(LogitGroup { terms });
        }
    }
    Ok(tape.softmax_cross_entropy(groups)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct exp/log evaluation without any max-shift.
    fn naive(a: &[f64], p: &[f64], no: &[Vec<f64>], na: &[Vec<f64>], cfg: &LossConfig) -> f64 {
        let tau = cfg.temperature;
        let tn = if cfg.tau_on_negatives { tau } else { 1.0 };
        let s = |x: &[f64], y: &[f64]| cosine_sim(x, y).unwrap();
        let one = |a: &[f64], p: &[f64]| {
            let pos = (s(a, p) / tau).exp();
            let neg: f64 = no
                .iter()
                .zip(na)
                .map(|(o, g)| (s(a, o) / tn).exp() + (s(a, g) / tn).exp())
                .sum();
            -(pos / (pos + neg)).ln()
        };
        if cfg.symmetric_views {
            0.5 * (one(a, p) + one(p, a))
        } else {
            one(a, p)
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_sim(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() - 10.0 / 14.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(cosine_sim(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn identical_vectors_give_ln3() {
        let x = vec![0.3, -0.2, 0.9];
        let cfg = LossConfig {
            temperature: 1.0,
            ..LossConfig::default()
        };
        let l = info_nce_value(&x, &x, &[x.clone()], &[x.clone()], &cfg).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fixed_three_dim_instance_matches_naive() {
        let a = [1.0, 0.0, 0.0];
        let p = [0.8, 0.6, 0.0];
        let no = vec![vec![0.0, 1.0, 0.0]];
        let na = vec![vec![0.0, 0.0, 1.0]];
        for tau_on_negatives in [true, false] {
            for symmetric_views in [false, true] {
                let cfg = LossConfig {
                    temperature: 0.5,
                    tau_on_negatives,
                    symmetric_views,
                    ..LossConfig::default()
                };
                let got = info_nce_value(&a, &p, &no, &na, &cfg).unwrap();
                assert!((got - naive(&a, &p, &no, &na, &cfg)).abs() < 1e-12);
            }
        }
        // s(a,p) = 0.8, both negatives orthogonal: -ln(e^1.6 / (e^1.6 + 2)).
        let cfg = LossConfig::default();
        let expected = -(1.6f64.exp() / (1.6f64.exp() + 2.0)).ln();
        assert!((info_nce_value(&a, &p, &no, &na, &cfg).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn tiny_temperature_stays_finite() {
        let cfg = LossConfig {
            temperature: 0.01,
            ..LossConfig::default()
        };
        let l = info_nce_value(&[1.0, 0.0], &[-1.0, 0.0], &[vec![1.0, 0.0]], &[vec![1.0, 0.1]], &cfg).unwrap();
        assert!(l.is_finite() && l > 190.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = LossConfig::default();
        assert!(matches!(
            info_nce_value(&[1.0], &[1.0], &[], &[], &cfg),
            Err(ContrastiveError::NoNegatives)
        ));
        let bad = LossConfig {
            temperature: -1.0,
            ..cfg
        };
        assert!(info_nce_value(&[1.0], &[1.0], &[vec![1.0]], &[vec![1.0]], &bad).is_err());
    }

    #[test]
    fn batch_loss_matches_per_target_losses() {
        let z =
            DenseMatrix::from_rows(&[[1.0, 0.2, -0.3], [0.1, 1.0, 0.0], [-0.5, 0.4, 0.9], [0.3, 0.3, 0.3]]).unwrap();
        let za =
            DenseMatrix::from_rows(&[[0.9, 0.3, -0.1], [0.0, 0.8, 0.4], [-0.2, 0.5, 1.0], [0.6, 0.1, 0.2]]).unwrap();
        let batch = [3, 0, 2];
        let negatives = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        for symmetric_views in [false, true] {
            let cfg = LossConfig {
                symmetric_views,
                ..LossConfig::default()
            };
            let mut tape = Tape::new();
            let zo = tape.constant(z.clone());
            let zs = tape.constant(za.clone());
            let l = batch_info_nce(&mut tape, zo, zs, &batch, &negatives, &cfg).unwrap();
            let mut expected = 0.0;
            for (p, negs) in negatives.iter().enumerate() {
                let no: Vec<Vec<f64>> = negs.iter().map(|&j| z.row(batch[j]).to_vec()).collect();
                let na: Vec<Vec<f64>> = negs.iter().map(|&j| za.row(batch[j]).to_vec()).collect();
                expected += naive(z.row(batch[p]), za.row(batch[p]), &no, &na, &cfg);
            }
            expected /= batch.len() as f64;
            assert!((tape.value(l).get(0, 0) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn negatives_parse_from_config_text() {
        #[derive(Deserialize)]
        struct W {
            n: Negatives,
        }
        let all: W = serde_json::from_str(r#"{"n":"all"}"#).unwrap();
        assert_eq!(all.n, Negatives::All);
        let k: W = serde_json::from_str(r#"{"n":7}"#).unwrap();
        assert_eq!(k.n, Negatives::Count(7));
        assert!(serde_json::from_str::<W>(r#"{"n":"some"}"#).is_err());
    }
}
