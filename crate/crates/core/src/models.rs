//! Scoring functions and their analytic gradients.
//!
//! | model | score(h, r, t) |
//! |---|---|
//! | RESCAL | `hᵀ W_r t` |
//! | TransE | `−‖h + r − t‖₂` |
//! | DistMult | `Σ h·r·t` |
//! | ComplEx | `Re(Σ h·r·conj(t))` |
//!
//! Higher scores mean more plausible triples for every model. ComplEx rows
//! store the real half followed by the imaginary half.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};

pub mod checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rescal,
    TransE,
    DistMult,
    ComplEx,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rescal, ModelKind::TransE, ModelKind::DistMult, ModelKind::ComplEx];

    pub fn entity_width(self, dim: usize) -> usize {
        match self {
            ModelKind::ComplEx => 2 * dim,
            _ => dim,
        }
    }

    pub fn relation_width(self, dim: usize) -> usize {
        match self {
            ModelKind::Rescal => dim * dim,
            ModelKind::ComplEx => 2 * dim,
            ModelKind::TransE | ModelKind::DistMult => dim,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rescal => "rescal",
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rescal" => Ok(ModelKind::Rescal),
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            other => Err(format!("unknown model {other:?}")),
        }
    }
}

/// Entity and relation parameter tables, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub dim: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
}

/// Gradient rows touched by one triple. A row appears at most once per table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGrad {
    pub entities: Vec<(EntityId, Vec<f64>)>,
    pub relations: Vec<(RelationId, Vec<f64>)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn neg_distance(a: &[f64], b: &[f64]) -> f64 {
    -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl ModelParams {
    pub fn zeros(kind: ModelKind, n_entities: usize, n_relations: usize, dim: usize) -> Self {
        ModelParams {
            kind,
            dim,
            n_entities,
            n_relations,
            entities: vec![0.0; n_entities * kind.entity_width(dim)],
            relations: vec![0.0; n_relations * kind.relation_width(dim)],
        }
    }

    pub fn entity_width(&self) -> usize {
        self.kind.entity_width(self.dim)
    }

    pub fn relation_width(&self) -> usize {
        self.kind.relation_width(self.dim)
    }

    pub fn entity(&self, id: EntityId) -> &[f64] {
        let w = self.entity_width();
        &self.entities[id as usize * w..(id as usize + 1) * w]
    }

    pub fn relation(&self, id: RelationId) -> &[f64] {
        let w = self.relation_width();
        &self.relations[id as usize * w..(id as usize + 1) * w]
    }

    pub fn entity_mut(&mut self, id: EntityId) -> &mut [f64] {
        let w = self.entity_width();
        &mut self.entities[id as usize * w..(id as usize + 1) * w]
    }

    pub fn relation_mut(&mut self, id: RelationId) -> &mut [f64] {
        let w = self.relation_width();
        &mut self.relations[id as usize * w..(id as usize + 1) * w]
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|v| v.is_finite())
    }

    fn check_entity(&self, id: EntityId) -> Result<()> {
        if (id as usize) < self.n_entities {
            Ok(())
        } else {
            Err(Error::IdOutOfRange { kind: "entity", id: id as usize, len: self.n_entities })
        }
    }

    fn check_relation(&self, id: RelationId) -> Result<()> {
        if (id as usize) < self.n_relations {
            Ok(())
        } else {
            Err(Error::IdOutOfRange { kind: "relation", id: id as usize, len: self.n_relations })
        }
    }

    /// Copy holding only the listed rows, renumbered in list order.
    pub fn select(&self, entities: &[EntityId], relations: &[RelationId]) -> Result<ModelParams> {
        let mut out = ModelParams::zeros(self.kind, entities.len(), relations.len(), self.dim);
        for (new, &old) in entities.iter().enumerate() {
            self.check_entity(old)?;
            out.entity_mut(new as EntityId).copy_from_slice(self.entity(old));
        }
        for (new, &old) in relations.iter().enumerate() {
            self.check_relation(old)?;
            out.relation_mut(new as RelationId).copy_from_slice(self.relation(old));
        }
        Ok(out)
    }

    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<f64> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        self.check_entity(t)?;
        Ok(self.score_unchecked(h, r, t))
    }

    pub(crate) fn score_unchecked(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let (eh, wr, et) = (self.entity(h), self.relation(r), self.entity(t));
        let d = self.dim;
        match self.kind {
            ModelKind::DistMult => eh.iter().zip(wr).zip(et).map(|((a, b), c)| a * b * c).sum(),
            ModelKind::TransE => {
                -eh.iter()
                    .zip(wr)
                    .zip(et)
                    .map(|((a, b), c)| (a + b - c).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
            ModelKind::Rescal => {
                let mut s = 0.0;
                for i in 0..d {
                    s += eh[i] * dot(&wr[i * d..(i + 1) * d], et);
                }
                s
            }
            ModelKind::ComplEx => {
                let (hr, hi) = eh.split_at(d);
                let (rr, ri) = wr.split_at(d);
                let (tr, ti) = et.split_at(d);
                (0..d)
                    .map(|k| hr[k] * rr[k] * tr[k] + hi[k] * rr[k] * ti[k] + hr[k] * ri[k] * ti[k] - hi[k] * ri[k] * tr[k])
                    .sum()
            }
        }
    }

    /// Query vector `q` such that `score(h, r, x) = q · e_x` (or, for TransE,
    /// `−‖q − e_x‖`).
    fn tail_query(&self, h: EntityId, r: RelationId) -> Vec<f64> {
        let (eh, wr) = (self.entity(h), self.relation(r));
        let d = self.dim;
        match self.kind {
            ModelKind::DistMult => eh.iter().zip(wr).map(|(a, b)| a * b).collect(),
            ModelKind::TransE => eh.iter().zip(wr).map(|(a, b)| a + b).collect(),
            ModelKind::Rescal => (0..d).map(|j| (0..d).map(|i| eh[i] * wr[i * d + j]).sum()).collect(),
            ModelKind::ComplEx => {
                let (hr, hi) = eh.split_at(d);
                let (rr, ri) = wr.split_at(d);
                let re = (0..d).map(|k| hr[k] * rr[k] - hi[k] * ri[k]);
                let im = (0..d).map(|k| hr[k] * ri[k] + hi[k] * rr[k]);
                re.chain(im).collect()
            }
        }
    }

    fn head_query(&self, r: RelationId, t: EntityId) -> Vec<f64> {
        let (wr, et) = (self.relation(r), self.entity(t));
        let d = self.dim;
        match self.kind {
            ModelKind::DistMult => wr.iter().zip(et).map(|(a, b)| a * b).collect(),
            ModelKind::TransE => et.iter().zip(wr).map(|(a, b)| a - b).collect(),
            ModelKind::Rescal => (0..d).map(|i| dot(&wr[i * d..(i + 1) * d], et)).collect(),
            ModelKind::ComplEx => {
                let (rr, ri) = wr.split_at(d);
                let (tr, ti) = et.split_at(d);
                let re = (0..d).map(|k| rr[k] * tr[k] + ri[k] * ti[k]);
                let im = (0..d).map(|k| rr[k] * ti[k] - ri[k] * tr[k]);
                re.chain(im).collect()
            }
        }
    }

    fn relation_query(&self, h: EntityId, t: EntityId) -> Vec<f64> {
        let (eh, et) = (self.entity(h), self.entity(t));
        let d = self.dim;
        match self.kind {
            ModelKind::DistMult => eh.iter().zip(et).map(|(a, b)| a * b).collect(),
            ModelKind::TransE => et.iter().zip(eh).map(|(a, b)| a - b).collect(),
            ModelKind::Rescal => (0..d * d).map(|k| eh[k / d] * et[k % d]).collect(),
            ModelKind::ComplEx => {
                let (hr, hi) = eh.split_at(d);
                let (tr, ti) = et.split_at(d);
                let re = (0..d).map(|k| hr[k] * tr[k] + hi[k] * ti[k]);
                let im = (0..d).map(|k| hr[k] * ti[k] - hi[k] * tr[k]);
                re.chain(im).collect()
            }
        }
    }

    fn scan(&self, query: &[f64], table: &[f64], width: usize) -> Vec<f64> {
        if self.kind == ModelKind::TransE {
            table.chunks_exact(width).map(|row| neg_distance(row, query)).collect()
        } else {
            table.chunks_exact(width).map(|row| dot(row, query)).collect()
        }
    }

    /// `score(h, r, x)` for every entity `x`, in one pass over the entity table.
    pub fn score_all_tails(&self, h: EntityId, r: RelationId) -> Result<Vec<f64>> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        let q = self.tail_query(h, r);
        Ok(self.scan(&q, &self.entities, self.entity_width()))
    }

    /// `score(x, r, t)` for every entity `x`.
    pub fn score_all_heads(&self, r: RelationId, t: EntityId) -> Result<Vec<f64>> {
        self.check_relation(r)?;
        self.check_entity(t)?;
        let q = self.head_query(r, t);
        Ok(self.scan(&q, &self.entities, self.entity_width()))
    }

    /// `score(h, y, t)` for every relation `y`.
    pub fn score_all_relations(&self, h: EntityId, t: EntityId) -> Result<Vec<f64>> {
        self.check_entity(h)?;
        self.check_entity(t)?;
        let q = self.relation_query(h, t);
        Ok(self.scan(&q, &self.relations, self.relation_width()))
    }

    /// `upstream · ∂score(h, r, t)/∂θ` for the touched rows. The TransE
    /// gradient at zero distance is defined as zero.
    pub fn grad(&self, h: EntityId, r: RelationId, t: EntityId, upstream: f64) -> Result<SparseGrad> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        self.check_entity(t)?;
        let (eh, wr, et) = (self.entity(h), self.relation(r), self.entity(t));
        let d = self.dim;
        let (gh, gr, gt): (Vec<f64>, Vec<f64>, Vec<f64>) = match self.kind {
            ModelKind::DistMult => (
                (0..d).map(|i| wr[i] * et[i]).collect(),
                (0..d).map(|i| eh[i] * et[i]).collect(),
                (0..d).map(|i| eh[i] * wr[i]).collect(),
            ),
            ModelKind::TransE => {
                let diff: Vec<f64> = (0..d).map(|i| eh[i] + wr[i] - et[i]).collect();
                let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    (vec![0.0; d], vec![0.0; d], vec![0.0; d])
                } else {
                    let g: Vec<f64> = diff.iter().map(|v| -v / norm).collect();
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    (g.clone(), g, neg)
                }
            }
            ModelKind::Rescal => {
                let gh = (0..d).map(|i| dot(&wr[i * d..(i + 1) * d], et)).collect();
                let gt = (0..d).map(|j| (0..d).map(|i| eh[i] * wr[i * d + j]).sum()).collect();
                let gr = (0..d * d).map(|k| eh[k / d] * et[k % d]).collect();
                (gh, gr, gt)
            }
            ModelKind::ComplEx => {
                let (hr, hi) = eh.split_at(d);
                let (rr, ri) = wr.split_at(d);
                let (tr, ti) = et.split_at(d);
                let mut gh = vec![0.0; 2 * d];
                let mut gr = vec![0.0; 2 * d];
                let mut gt = vec![0.0; 2 * d];
                for k in 0..d {
                    gh[k] = rr[k] * tr[k] + ri[k] * ti[k];
                    gh[d + k] = rr[k] * ti[k] - ri[k] * tr[k];
                    gr[k] = hr[k] * tr[k] + hi[k] * ti[k];
                    gr[d + k] = hr[k] * ti[k] - hi[k] * tr[k];
                    gt[k] = hr[k] * rr[k] - hi[k] * ri[k];
                    gt[d + k] = hi[k] * rr[k] + hr[k] * ri[k];
                }
                (gh, gr, gt)
            }
        };

        let scale = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x * upstream).collect() };
        let entities = if h == t {
            vec![(h, scale(gh.iter().zip(&gt).map(|(a, b)| a + b).collect()))]
        } else {
            vec![(h, scale(gh)), (t, scale(gt))]
        };
        Ok(SparseGrad {
            entities,
            relations: vec![(r, scale(gr))],
        })
    }
}

/// Fresh parameters with every matrix drawn uniformly from `[−a, a]`,
/// `a = sqrt(6 / (fan_in + fan_out))`. Entity rows are drawn before
/// relation rows from one ChaCha8 stream seeded with `seed`.
pub fn init_params(kind: ModelKind, n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Result<ModelParams> {
    if dim == 0 {
        return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
    }
    let mut params = ModelParams::zeros(kind, n_entities, n_relations, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let entity_bound = (6.0 / (n_entities + params.entity_width()) as f64).sqrt();
    fill_uniform(&mut rng, &mut params.entities, entity_bound);

    if kind == ModelKind::Rescal {
        // One bound per d×d relation matrix.
        let bound = (6.0 / (2 * dim) as f64).sqrt();
        fill_uniform(&mut rng, &mut params.relations, bound);
    } else {
        let bound = (6.0 / (n_relations + params.relation_width()) as f64).sqrt();
        fill_uniform(&mut rng, &mut params.relations, bound);
    }
    Ok(params)
}

fn fill_uniform(rng: &mut ChaCha8Rng, values: &mut [f64], bound: f64) {
    for v in values {
        *v = rng.random_range(-bound..=bound);
    }
}
