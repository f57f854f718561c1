//! FCIDUMP reader and writer (Molpro convention, chemist notation).
//!
//! A file starts with a namelist header
//!
//! ```text
//!  &FCI NORB=6,NELEC=8,MS2=0,
//!   ORBSYM=1,1,1,1,1,1,
//!   ISYM=1,
//!  &END
//! ```
//!
//! followed by `value i j k l` records with 1-based indices: `i j k l` all
//! nonzero is the two-electron integral (ij|kl), `i j 0 0` the one-electron
//! integral h_ij and `0 0 0 0` the core energy. Records `i 0 0 0` (orbital
//! energies) are accepted and ignored, as are ORBSYM and ISYM. The file must
//! already describe the active space; no frozen-core folding happens here.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::{Error, Result};

/// Tolerance for symmetry checks and for deciding whether two records of the
/// same canonical integral conflict.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Active-space one- and two-electron integrals plus the core energy.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularIntegrals {
    n_orbitals: usize,
    n_alpha: usize,
    n_beta: usize,
    core_energy: f64,
    one_body: Vec<f64>,
    two_body: Vec<f64>,
}

impl MolecularIntegrals {
    /// Builds integrals from dense arrays, checking every invariant.
    ///
    /// `one_body` is row-major `n×n`, `two_body` is `n⁴` with index
    /// `((p*n + q)*n + r)*n + s` holding (pq|rs).
    pub fn new(
        n_orbitals: usize,
        n_alpha: usize,
        n_beta: usize,
        core_energy: f64,
        one_body: Vec<f64>,
        two_body: Vec<f64>,
    ) -> Result<Self> {
        let n = n_orbitals;
        if one_body.len() != n * n {
            return Err(Error::SizeMismatch {
                expected: n * n,
                found: one_body.len(),
            });
        }
        if two_body.len() != n * n * n * n {
            return Err(Error::SizeMismatch {
                expected: n * n * n * n,
                found: two_body.len(),
            });
        }
        if n_alpha > n || n_beta > n {
            return Err(Error::InvalidSector {
                n_orb: n,
                n_alpha,
                n_beta,
            });
        }
        if n > 32 {
            return Err(Error::TooLarge { dim: n, limit: 32 });
        }
        let ints = Self {
            n_orbitals,
            n_alpha,
            n_beta,
            core_energy,
            one_body,
            two_body,
        };
        ints.check_symmetry()?;
        Ok(ints)
    }

    fn check_symmetry(&self) -> Result<()> {
        let n = self.n_orbitals;
        for p in 0..n {
            for q in 0..n {
                if (self.h1(p, q) - self.h1(q, p)).abs() >= SYMMETRY_TOL {
                    return Err(Error::Integrals(format!(
                        "one-body integrals not symmetric at ({p}, {q})"
                    )));
                }
            }
        }
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let v = self.eri(p, q, r, s);
                        for (a, b, c, d) in images(p, q, r, s) {
                            if (self.eri(a, b, c, d) - v).abs() >= SYMMETRY_TOL {
                                return Err(Error::Integrals(format!(
                                    "two-body integrals break 8-fold symmetry at ({p}{q}|{r}{s})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_orbitals(&self) -> usize {
        self.n_orbitals
    }

    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    pub fn n_beta(&self) -> usize {
        self.n_beta
    }

    /// Nuclear repulsion plus frozen-core shift, in Hartree.
    pub fn core_energy(&self) -> f64 {
        self.core_energy
    }

    #[inline]
    pub fn h1(&self, p: usize, q: usize) -> f64 {
        self.one_body[p * self.n_orbitals + q]
    }

    /// Chemist-notation two-electron integral (pq|rs).
    #[inline]
    pub fn eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.n_orbitals;
        self.two_body[((p * n + q) * n + r) * n + s]
    }

    pub fn one_body(&self) -> &[f64] {
        &self.one_body
    }

    pub fn two_body(&self) -> &[f64] {
        &self.two_body
    }

    /// Same integrals with a different electron count.
    pub fn with_sector(&self, n_alpha: usize, n_beta: usize) -> Result<Self> {
        if n_alpha > self.n_orbitals || n_beta > self.n_orbitals {
            return Err(Error::InvalidSector {
                n_orb: self.n_orbitals,
                n_alpha,
                n_beta,
            });
        }
        Ok(Self {
            n_alpha,
            n_beta,
            ..self.clone()
        })
    }

    /// Relabels orbitals: old orbital `p` becomes new orbital `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_orbitals;
        let mut seen = vec![false; n];
        if perm.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: perm.len(),
            });
        }
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
        }
        let mut one = vec![0.0; n * n];
        let mut two = vec![0.0; n * n * n * n];
        for p in 0..n {
            for q in 0..n {
                one[perm[p] * n + perm[q]] = self.h1(p, q);
                for r in 0..n {
                    for s in 0..n {
                        two[((perm[p] * n + perm[q]) * n + perm[r]) * n + perm[s]] =
                            self.eri(p, q, r, s);
                    }
                }
            }
        }
        Self::new(n, self.n_alpha, self.n_beta, self.core_energy, one, two)
    }

    /// Random integrals with the full permutational symmetry, for tests and
    /// benchmarks. Diagonal one-body terms increase with the orbital index
    /// so the lowest determinant is a sensible reference.
    pub fn random(
        n_orbitals: usize,
        n_alpha: usize,
        n_beta: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let n = n_orbitals;
        let mut one = vec![0.0; n * n];
        for p in 0..n {
            one[p * n + p] = -2.0 + 0.6 * p as f64 + rng.random_range(-0.1..0.1);
            for q in 0..p {
                let v = rng.random_range(-0.2..0.2);
                one[p * n + q] = v;
                one[q * n + p] = v;
            }
        }
        let mut two = vec![0.0; n * n * n * n];
        for p in 0..n {
            for q in 0..=p {
                for r in 0..n {
                    for s in 0..=r {
                        if (p * (p + 1) / 2 + q) < (r * (r + 1) / 2 + s) {
                            continue;
                        }
                        let v = if p == q && r == s {
                            rng.random_range(0.3..0.8)
                        } else {
                            rng.random_range(-0.1..0.1)
                        };
                        for (a, b, c, d) in images(p, q, r, s) {
                            two[((a * n + b) * n + c) * n + d] = v;
                        }
                    }
                }
            }
        }
        Self::new(n, n_alpha, n_beta, rng.random_range(-1.0..1.0), one, two)
    }

    /// Serializes to FCIDUMP text with 15 significant digits per value.
    ///
    /// Only the canonical image of each two-body integral is written, and
    /// zeros are skipped.
    pub fn to_fcidump(&self) -> String {
        let n = self.n_orbitals;
        let mut out = String::new();
        let nelec = self.n_alpha + self.n_beta;
        let ms2 = self.n_alpha as i64 - self.n_beta as i64;
        let _ = writeln!(out, " &FCI NORB={n},NELEC={nelec},MS2={ms2},");
        let _ = writeln!(out, "  ORBSYM={}", "1,".repeat(n));
        let _ = writeln!(out, "  ISYM=1,");
        let _ = writeln!(out, " &END");
        for p in 0..n {
            for q in 0..=p {
                for r in 0..=p {
                    let s_max = if r == p { q } else { r };
                    for s in 0..=s_max {
                        let v = self.eri(p, q, r, s);
                        if v != 0.0 {
                            let _ = writeln!(
                                out,
                                "{} {:4} {:4} {:4} {:4}",
                                fmt_value(v),
                                p + 1,
                                q + 1,
                                r + 1,
                                s + 1
                            );
                        }
                    }
                }
            }
        }
        for p in 0..n {
            for q in 0..=p {
                let v = self.h1(p, q);
                if v != 0.0 {
                    let _ = writeln!(out, "{} {:4} {:4}    0    0", fmt_value(v), p + 1, q + 1);
                }
            }
        }
        let _ = writeln!(out, "{}    0    0    0    0", fmt_value(self.core_energy));
        out
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:23.14E}")
}

/// The eight index tuples equal to (pq|rs) under real-orbital symmetry.
fn images(p: usize, q: usize, r: usize, s: usize) -> [(usize, usize, usize, usize); 8] {
    [
        (p, q, r, s),
        (q, p, r, s),
        (p, q, s, r),
        (q, p, s, r),
        (r, s, p, q),
        (s, r, p, q),
        (r, s, q, p),
        (s, r, q, p),
    ]
}

fn canonical(p: usize, q: usize, r: usize, s: usize) -> (usize, usize, usize, usize) {
    let (p, q) = if p >= q { (p, q) } else { (q, p) };
    let (r, s) = if r >= s { (r, s) } else { (s, r) };
    if (p, q) >= (r, s) {
        (p, q, r, s)
    } else {
        (r, s, p, q)
    }
}

#[derive(Debug, Default)]
struct Header {
    norb: Option<usize>,
    nelec: Option<usize>,
    ms2: Option<i64>,
}

fn parse_header(text: &str) -> Result<Header> {
    let body = text
        .trim_start()
        .strip_prefix("&FCI")
        .or_else(|| text.trim_start().strip_prefix("&fci"))
        .ok_or_else(|| Error::Header("missing &FCI".into()))?;
    let mut header = Header::default();
    let mut key = String::new();
    for piece in body.split([',', '\n', '\r']) {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let value = match piece.split_once('=') {
            Some((k, v)) => {
                key = k.trim().to_ascii_uppercase();
                v.trim()
            }
            None => piece,
        };
        if value.is_empty() {
            continue;
        }
        let bad = || Error::Header(format!("bad value '{value}' for {key}"));
        match key.as_str() {
            "NORB" => header.norb = Some(value.parse().map_err(|_| bad())?),
            "NELEC" => header.nelec = Some(value.parse().map_err(|_| bad())?),
            "MS2" => header.ms2 = Some(value.parse().map_err(|_| bad())?),
            // ORBSYM, ISYM, UHF, ... carry no information we use.
            _ => {}
        }
    }
    Ok(header)
}

/// Parses FCIDUMP text into integrals, expanding every two-body record to
/// all of its symmetry images.
pub fn parse_fcidump(text: &str) -> Result<MolecularIntegrals> {
    let mut header_end = None;
    let mut offset = 0;
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        let upper = line.trim().to_ascii_uppercase();
        if upper.ends_with("&END") || upper.ends_with('/') {
            header_end = Some((offset, lineno + 2));
            break;
        }
    }
    let (end, first_record_line) =
        header_end.ok_or_else(|| Error::Header("missing &END or '/' terminator".into()))?;
    let header_text = text[..end].trim_end();
    let header_text = header_text
        .strip_suffix("&END")
        .or_else(|| header_text.strip_suffix("&end"))
        .or_else(|| header_text.strip_suffix('/'))
        .unwrap_or(header_text);
    let header = parse_header(header_text)?;
    let n = header
        .norb
        .ok_or_else(|| Error::Header("NORB missing".into()))?;
    let nelec = header
        .nelec
        .ok_or_else(|| Error::Header("NELEC missing".into()))?;
    let (n_alpha, n_beta) = match header.ms2 {
        Some(ms2) => {
            let twice_alpha = nelec as i64 + ms2;
            if twice_alpha < 0 || twice_alpha % 2 != 0 || ms2.unsigned_abs() as usize > nelec {
                return Err(Error::Header(format!(
                    "NELEC={nelec} incompatible with MS2={ms2}"
                )));
            }
            let na = (twice_alpha / 2) as usize;
            (na, nelec - na)
        }
        None if nelec % 2 == 1 => {
            return Err(Error::Header(format!("odd NELEC={nelec} requires MS2")));
        }
        None => (nelec / 2, nelec / 2),
    };
    if n_alpha > n || n_beta > n {
        return Err(Error::InvalidSector {
            n_orb: n,
            n_alpha,
            n_beta,
        });
    }

    let mut two: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();
    let mut one: HashMap<(usize, usize), f64> = HashMap::new();
    let mut core: Option<f64> = None;
    let conflict = |line: usize, what: String| Error::Parse {
        line,
        msg: format!("conflicting duplicate record for {what}"),
    };

    for (i, line) in text[end..].lines().enumerate() {
        let lineno = first_record_line + i;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 'value i j k l', found '{t}'"),
            });
        }
        let value: f64 = fields[0]
            .replace(['D', 'd'], "E")
            .parse()
            .map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad value '{}'", fields[0]),
            })?;
        let mut idx = [0usize; 4];
        for (slot, f) in idx.iter_mut().zip(&fields[1..]) {
            let v: usize = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad index '{f}'"),
            })?;
            if v > n {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("index {v} outside [1, {n}]"),
                });
            }
            *slot = v;
        }
        let [i1, j1, k1, l1] = idx;
        match (i1, j1, k1, l1) {
            (0, 0, 0, 0) => {
                if let Some(old) = core.replace(value) {
                    if (old - value).abs() > SYMMETRY_TOL {
                        return Err(conflict(lineno, "core energy".into()));
                    }
                }
            }
            (i, j, 0, 0) if i > 0 && j > 0 => {
                let key = (i.max(j) - 1, i.min(j) - 1);
                if let Some(old) = one.insert(key, value) {
                    if (old - value).abs() > SYMMETRY_TOL {
                        return Err(conflict(lineno, format!("h({i},{j})")));
                    }
                }
            }
            // orbital energies
            (i, 0, 0, 0) if i > 0 => {}
            (i, j, k, l) if i > 0 && j > 0 && k > 0 && l > 0 => {
                let key = canonical(i - 1, j - 1, k - 1, l - 1);
                if let Some(old) = two.insert(key, value) {
                    if (old - value).abs() > SYMMETRY_TOL {
                        return Err(conflict(lineno, format!("({i}{j}|{k}{l})")));
                    }
                }
            }
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("index pattern {i1} {j1} {k1} {l1} is not a valid record"),
                });
            }
        }
    }

    let mut one_body = vec![0.0; n * n];
    for ((p, q), v) in one {
        one_body[p * n + q] = v;
        one_body[q * n + p] = v;
    }
    let mut two_body = vec![0.0; n * n * n * n];
    for ((p, q, r, s), v) in two {
        for (a, b, c, d) in images(p, q, r, s) {
            two_body[((a * n + b) * n + c) * n + d] = v;
        }
    }
    MolecularIntegrals::new(
        n,
        n_alpha,
        n_beta,
        core.unwrap_or(0.0),
        one_body,
        two_body,
    )
}

/// Reads and parses an FCIDUMP file.
pub fn read_fcidump(path: impl AsRef<Path>) -> Result<MolecularIntegrals> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    parse_fcidump(&text)
}
