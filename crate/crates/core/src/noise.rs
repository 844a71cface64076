//! Noise operators: magnetization-conserving Haar block unitaries, the
//! multi-site phase flip, and conservation-constrained Pauli channels.
//!
//! Random draws take explicit seeds; [`stream_seed`] derives independent
//! seeds from `(master seed, trajectory, event)` so results do not depend
//! on scheduling order.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hilbert::{self, SectorBasis, SiteSubset, SubsetLayout};
use crate::linalg::{self, c64, cr, CMat};
use crate::state::DensityMatrix;

/// Largest noisy subset accepted by the Haar sampler.
pub const MAX_HAAR_SITES: usize = 6;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent seed for one event of one trajectory.
pub fn stream_seed(master: u64, trajectory: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ trajectory) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-distributed `n x n` unitary: QR of a complex Ginibre matrix with
/// the phases of `diag(R)` divided out.
pub fn haar_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = Mat::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64::new(re * scale, im * scale)
    });
    let qr = g.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    Mat::from_fn(n, n, |i, j| {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { cr(1.0) };
        q[(i, j)] * phase
    })
}

/// Random unitary on a noisy subset, block diagonal in the local up-count.
///
/// The all-down and all-up local states are fixed; every intermediate
/// up-count block is an independent Haar draw.
#[derive(Debug, Clone)]
pub struct HaarBlockUnitary {
    pub subset: SiteSubset,
    /// `2^m x 2^m`, in subset order.
    pub local: CMat,
    pub seed: u64,
    /// `(up count, seed)` of each random block.
    pub block_seeds: Vec<(u32, u64)>,
}

pub fn sample_haar_block(subset: &SiteSubset, seed: u64) -> Result<HaarBlockUnitary> {
    let m = subset.len();
    if m == 0 || m > MAX_HAAR_SITES {
        return Err(Error::InvalidSubset(format!(
            "Haar block needs 1..={MAX_HAAR_SITES} sites, got {m}"
        )));
    }
    let dim = 1usize << m;
    let mut local = Mat::<c64>::zeros(dim, dim);
    local[(0, 0)] = cr(1.0);
    local[(dim - 1, dim - 1)] = cr(1.0);
    let mut block_seeds = Vec::new();
    for k in 1..m as u32 {
        let members: Vec<usize> = (0..dim).filter(|&a| (a as u32).count_ones() == k).collect();
        let block_seed = stream_seed(seed, 0, k as u64);
        let u = haar_unitary(members.len(), &mut rng_from(block_seed));
        for (r, &a) in members.iter().enumerate() {
            for (c, &b) in members.iter().enumerate() {
                local[(a, b)] = u[(r, c)];
            }
        }
        block_seeds.push((k, block_seed));
    }
    Ok(HaarBlockUnitary {
        subset: subset.clone(),
        local,
        seed,
        block_seeds,
    })
}

impl HaarBlockUnitary {
    pub fn apply(&self, layout: &SubsetLayout, amps: &mut [c64]) {
        hilbert::apply_local_operator(self.local.as_ref(), layout, amps);
    }

    pub fn embed(&self, basis: &SectorBasis) -> Result<CMat> {
        hilbert::embed_local_operator(self.local.as_ref(), &self.subset, basis)
    }
}

/// Sign of `S^z = prod sigma^z` over `sites` on `mask`, using sigma^z|up> = +|up>.
pub fn parity_sign(mask: u64, sites: &[usize]) -> f64 {
    let downs = sites.iter().filter(|&&s| (mask >> s) & 1 == 0).count();
    if downs % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Probability(p))
    }
}

/// `(1 - p) rho + p S rho S` with `S` the product of `sigma^z` over the subset.
pub fn apply_phase_flip(rho: &DensityMatrix, subset: &SiteSubset, p: f64) -> Result<DensityMatrix> {
    check_probability(p)?;
    let basis = rho.basis().clone();
    let signs: Vec<f64> = basis.states().iter().map(|&m| parity_sign(m, subset.sites())).collect();
    let src = rho.matrix();
    let d = basis.dim();
    let out = Mat::from_fn(d, d, |i, j| {
        let f = if signs[i] == signs[j] { 1.0 } else { 1.0 - 2.0 * p };
        src[(i, j)] * f
    });
    DensityMatrix::new(basis, out)
}

/// Apply the phase-flip string to a statevector in place.
pub fn apply_z_string(basis: &SectorBasis, sites: &[usize], amps: &mut [c64]) {
    for (a, &m) in amps.iter_mut().zip(basis.states()) {
        if parity_sign(m, sites) < 0.0 {
            *a = -*a;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PauliLetter {
    I,
    X,
    Z,
}

impl PauliLetter {
    fn matrix(self) -> CMat {
        match self {
            PauliLetter::I => linalg::identity(2),
            PauliLetter::X => linalg::pauli_x(),
            PauliLetter::Z => linalg::pauli_z(),
        }
    }

    pub fn parse(c: char) -> Option<Self> {
        match c {
            'I' | 'i' => Some(PauliLetter::I),
            'X' | 'x' => Some(PauliLetter::X),
            'Z' | 'z' => Some(PauliLetter::Z),
            _ => None,
        }
    }
}

/// One Pauli string, optionally multiplied by the antiparallel projector
/// `(I - Z...Z) / 2` on its support.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub letters: Vec<PauliLetter>,
    pub sites: Vec<usize>,
    pub projector: bool,
}

impl PauliString {
    /// Parse `"XX"` or `"XX*P"` (trailing `*P` sets the projector flag).
    pub fn parse(text: &str, sites: Vec<usize>) -> Result<Self> {
        let (ops, projector) = match text.strip_suffix("*P").or_else(|| text.strip_suffix("*p")) {
            Some(ops) => (ops, true),
            None => (text, false),
        };
        let letters = ops
            .chars()
            .map(|c| PauliLetter::parse(c).ok_or_else(|| Error::Config(format!("bad Pauli letter {c:?} in {text:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if letters.len() != sites.len() {
            return Err(Error::Config(format!(
                "Pauli string {text:?} has {} letters for {} sites",
                letters.len(),
                sites.len()
            )));
        }
        Ok(Self {
            letters,
            sites,
            projector,
        })
    }

    pub fn identity(sites: Vec<usize>) -> Self {
        Self {
            letters: vec![PauliLetter::I; sites.len()],
            sites,
            projector: false,
        }
    }

    pub fn z_string(sites: Vec<usize>) -> Self {
        Self {
            letters: vec![PauliLetter::Z; sites.len()],
            sites,
            projector: false,
        }
    }

    /// Local matrix on `support` (subset order), identity on support sites not in the string.
    pub fn local_matrix(&self, support: &[usize]) -> CMat {
        let mut out = linalg::identity(1);
        // the first support site is the least significant factor
        for &s in support.iter().rev() {
            let f = match self.sites.iter().position(|&x| x == s) {
                Some(k) => self.letters[k].matrix(),
                None => linalg::identity(2),
            };
            out = linalg::kron(out.as_ref(), f.as_ref());
        }
        if self.projector {
            let d = out.nrows();
            let proj = Mat::from_fn(d, d, |i, j| {
                if i != j {
                    return cr(0.0);
                }
                let zz = parity_sign(spread(i, support), &self.sites);
                cr(0.5 * (1.0 - zz))
            });
            out = &out * &proj;
        }
        out
    }
}

fn spread(local: usize, support: &[usize]) -> u64 {
    hilbert::spread_pattern(local as u32, support)
}

/// Pauli-string channel `rho -> sum_l p_l P_l rho P_l^dag`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliChannelSpec {
    pub strings: Vec<PauliString>,
    pub probs: Vec<f64>,
}

/// Validated Kraus form of a [`PauliChannelSpec`].
#[derive(Debug, Clone)]
pub struct KrausChannel {
    /// Union of all string supports, in first-seen order.
    pub support: Vec<usize>,
    pub kraus: Vec<CMat>,
    /// Frobenius norm of the completeness correction `I - sum_l p_l P_l^dag P_l`
    /// that was added as an extra Kraus operator (0 when none was needed).
    pub correction: f64,
}

impl PauliChannelSpec {
    /// Phase flip on `sites`: `Z...Z` with probability `p`, identity otherwise.
    pub fn phase_flip(sites: Vec<usize>, p: f64) -> Self {
        Self {
            strings: vec![PauliString::z_string(sites.clone()), PauliString::identity(sites)],
            probs: vec![p, 1.0 - p],
        }
    }

    /// The admissible two-site set `{ZZ, XX (I - ZZ)/2, I}` with weights `(p0, p1, p2)`.
    pub fn two_site(i: usize, j: usize, p0: f64, p1: f64, p2: f64) -> Self {
        Self {
            strings: vec![
                PauliString::z_string(vec![i, j]),
                PauliString {
                    letters: vec![PauliLetter::X, PauliLetter::X],
                    sites: vec![i, j],
                    projector: true,
                },
                PauliString::identity(vec![i, j]),
            ],
            probs: vec![p0, p1, p2],
        }
    }

    pub fn support(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for s in &self.strings {
            for &site in &s.sites {
                if !out.contains(&site) {
                    out.push(site);
                }
            }
        }
        out
    }

    /// Check probabilities and conservation, then build Kraus operators.
    ///
    /// Strings with a projector are not unitary, so `sum p_l P^dag P` can
    /// fall short of the identity; the deficit `D` is added as one extra
    /// Kraus operator `sqrt(D)`. A surplus is an error.
    pub fn validate(&self) -> Result<KrausChannel> {
        if self.strings.len() != self.probs.len() {
            return Err(Error::Config("one probability per Pauli string required".into()));
        }
        for &p in &self.probs {
            check_probability(p)?;
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("Pauli probabilities sum to {total}, not 1")));
        }
        let support = self.support();
        let d = 1usize << support.len();
        let s_z = Mat::from_fn(d, d, |i, j| {
            if i == j {
                cr(parity_sign(spread(i, &support), &support))
            } else {
                cr(0.0)
            }
        });
        let mut kraus = Vec::new();
        let mut completeness = Mat::<c64>::zeros(d, d);
        for (s, &p) in self.strings.iter().zip(&self.probs) {
            let m = s.local_matrix(&support);
            let defect = linalg::frobenius(linalg::commutator(m.as_ref(), s_z.as_ref()).as_ref());
            if defect > 1e-12 {
                return Err(Error::NonConserving(format!(
                    "{:?} on {:?} does not commute with Z...Z (||[P, S]|| = {defect:.3e})",
                    s.letters, s.sites
                )));
            }
            if p == 0.0 {
                continue;
            }
            let k = linalg::scale(m.as_ref(), cr(p.sqrt()));
            completeness += k.adjoint() * &k;
            kraus.push(k);
        }
        let deficit = linalg::identity(d) - &completeness;
        let (values, vecs) = linalg::hermitian_eigen(deficit.as_ref())?;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-12 {
            return Err(Error::Completeness { residual: -min });
        }
        let correction = linalg::frobenius(deficit.as_ref());
        if correction > 1e-14 {
            let root = linalg::reassemble(&values.iter().map(|&x| x.max(0.0).sqrt()).collect::<Vec<_>>(), vecs.as_ref());
            kraus.push(root);
        }
        Ok(KrausChannel {
            support,
            kraus,
            correction,
        })
    }
}

impl KrausChannel {
    /// `sum_k K rho K^dag` on a dense density matrix.
    pub fn apply_dense(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let basis = rho.basis().clone();
        if self.support.iter().any(|&s| s >= basis.length()) {
            return Err(Error::InvalidSubset("channel support exceeds lattice".into()));
        }
        if basis.is_sector() {
            for k in &self.kraus {
                hilbert::check_local_conservation(k.as_ref(), 1e-12)?;
            }
        }
        let layout = SubsetLayout::new(&basis, &self.support);
        let d = basis.dim();
        let mut out = Mat::<c64>::zeros(d, d);
        for k in &self.kraus {
            out += conjugate_dense(k, &layout, rho.matrix());
        }
        DensityMatrix::new(basis, out)
    }

    /// Completeness residual `||sum K^dag K - I||_F`.
    pub fn completeness_residual(&self) -> f64 {
        let d = 1usize << self.support.len();
        let mut acc = Mat::<c64>::zeros(d, d);
        for k in &self.kraus {
            acc += k.adjoint() * k;
        }
        linalg::frobenius((acc - linalg::identity(d)).as_ref())
    }
}

/// `K rho K^dag` with `K` local, applied column- then row-wise.
pub fn conjugate_dense(k: &CMat, layout: &SubsetLayout, rho: &CMat) -> CMat {
    let d = rho.nrows();
    let mut tmp = rho.clone();
    let mut col = vec![cr(0.0); d];
    for _ in 0..2 {
        for j in 0..d {
            for i in 0..d {
                col[i] = tmp[(i, j)];
            }
            hilbert::apply_local_operator(k.as_ref(), layout, &mut col);
            for i in 0..d {
                tmp[(i, j)] = col[i];
            }
        }
        tmp = tmp.adjoint().to_owned();
    }
    tmp
}

/// `sum_l p_l P_l rho P_l^dag` after validation.
pub fn apply_pauli_channel(rho: &DensityMatrix, spec: &PauliChannelSpec) -> Result<DensityMatrix> {
    spec.validate()?.apply_dense(rho)
}

/// Outcome of the necessary-condition check for a noise operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalizingReport {
    /// `||[M, H]||_F`.
    pub commutator_norm: f64,
    /// Whether the support of `M` touches both sides of the cut.
    pub straddles: bool,
    pub candidate: bool,
}

/// `M` can change the reduced state of `A` only if it fails to commute
/// with `H` or acts on both `A` and its complement.
pub fn check_thermalizing_conditions(
    m: &CMat,
    h: &CMat,
    m_support: &[usize],
    region_a: &[usize],
    tol: f64,
) -> Result<ThermalizingReport> {
    if m.nrows() != h.nrows() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            found: m.nrows(),
        });
    }
    let commutator_norm = linalg::frobenius(linalg::commutator(m.as_ref(), h.as_ref()).as_ref());
    let in_a = m_support.iter().any(|s| region_a.contains(s));
    let in_b = m_support.iter().any(|s| !region_a.contains(s));
    let straddles = in_a && in_b;
    Ok(ThermalizingReport {
        commutator_norm,
        straddles,
        candidate: commutator_norm > tol || straddles,
    })
}

/// Which channel a scheduled event applies.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    HaarBlock,
    PhaseFlip,
    Pauli(PauliChannelSpec),
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::HaarBlock => "haar",
            NoiseKind::PhaseFlip => "phase_flip",
            NoiseKind::Pauli(_) => "pauli",
        }
    }
}

/// A channel scheduled for one shock.
///
/// `probability` is used by the phase flip only; `stream` labels the
/// random stream the event draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEvent {
    pub kind: NoiseKind,
    pub sites: SiteSubset,
    pub probability: f64,
    pub stream: u64,
}

/// A realized shock on a local support.
#[derive(Debug, Clone)]
pub enum Channel {
    Unitary { support: Vec<usize>, local: CMat },
    Kraus(KrausChannel),
}

impl NoiseEvent {
    pub fn haar(sites: SiteSubset, stream: u64) -> Self {
        Self {
            kind: NoiseKind::HaarBlock,
            sites,
            probability: 1.0,
            stream,
        }
    }

    pub fn phase_flip(sites: SiteSubset, p: f64, stream: u64) -> Self {
        Self {
            kind: NoiseKind::PhaseFlip,
            sites,
            probability: p,
            stream,
        }
    }

    pub fn pauli(spec: PauliChannelSpec, sites: SiteSubset, stream: u64) -> Self {
        Self {
            kind: NoiseKind::Pauli(spec),
            sites,
            probability: 1.0,
            stream,
        }
    }

    /// Seed this event draws from inside trajectory `trajectory`.
    pub fn seed(&self, master: u64, trajectory: u64) -> u64 {
        stream_seed(master, trajectory, self.stream)
    }

    pub fn realize(&self, master: u64, trajectory: u64) -> Result<Channel> {
        match &self.kind {
            NoiseKind::HaarBlock => {
                let u = sample_haar_block(&self.sites, self.seed(master, trajectory))?;
                Ok(Channel::Unitary {
                    support: self.sites.sites().to_vec(),
                    local: u.local,
                })
            }
            NoiseKind::PhaseFlip => {
                check_probability(self.probability)?;
                let spec = PauliChannelSpec::phase_flip(self.sites.sites().to_vec(), self.probability);
                Ok(Channel::Kraus(spec.validate()?))
            }
            NoiseKind::Pauli(spec) => Ok(Channel::Kraus(spec.validate()?)),
        }
    }
}

impl Channel {
    pub fn support(&self) -> &[usize] {
        match self {
            Channel::Unitary { support, .. } => support,
            Channel::Kraus(k) => &k.support,
        }
    }

    pub fn operators(&self) -> Vec<&CMat> {
        match self {
            Channel::Unitary { local, .. } => vec![local],
            Channel::Kraus(k) => k.kraus.iter().collect(),
        }
    }
}
