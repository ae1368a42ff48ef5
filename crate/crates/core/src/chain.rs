//! Finite-state chains: generators, the quadratic-variation matrix Ψ, the
//! seminorm it induces and exact path simulation.
//!
//! Generators use the **column convention** throughout: entry `(i, j)` is the
//! rate of jumping *from* state `j` *to* state `i`, so every column sums to
//! zero. Most textbooks use the transpose.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::{abs, lit, to_f64, Field, Real};

/// Index of a basis vector `e_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State(pub usize);

impl State {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub start: T,
    pub matrix: SquareMatrix<T>,
}

/// Piecewise-constant rate matrix on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    n_states: usize,
    segments: Vec<Segment<T>>,
    horizon: T,
}

#[derive(Debug, Clone)]
pub struct ValidationOptions<T> {
    /// Allowed |column sum|.
    pub tol: T,
    /// When set, column sums within this bound (but above `tol`) are repaired by
    /// subtracting the error from the diagonal.
    pub repair_tol: Option<T>,
}

impl<T: Field> ValidationOptions<T> {
    pub fn exact() -> Self {
        Self {
            tol: T::zero(),
            repair_tol: None,
        }
    }
}

impl<T: Real> Default for ValidationOptions<T> {
    fn default() -> Self {
        Self {
            tol: lit(1e-12),
            repair_tol: None,
        }
    }
}

impl<T: Real> ValidationOptions<T> {
    pub fn with_repair() -> Self {
        Self {
            tol: lit(1e-12),
            repair_tol: Some(lit(1e-9)),
        }
    }
}

/// Checks the rate-matrix invariants and assembles a [`Generator`].
///
/// `raw` holds `(segment start, matrix)` pairs; the first start must be 0 and
/// starts must increase strictly below `horizon`.
pub fn validate_generator<T: Field>(
    raw: Vec<(T, SquareMatrix<T>)>,
    horizon: T,
    opts: &ValidationOptions<T>,
) -> Result<Generator<T>> {
    let zero = T::zero();
    if !(horizon > zero) {
        return Err(Error::SegmentGap {
            from: 0.0,
            to: to_f64(&horizon),
        });
    }
    let Some(first) = raw.first() else {
        return Err(Error::SegmentGap {
            from: 0.0,
            to: to_f64(&horizon),
        });
    };
    let n = first.1.dim();
    if first.0 != zero {
        return Err(Error::SegmentGap {
            from: 0.0,
            to: to_f64(&first.0),
        });
    }
    let mut segments = Vec::with_capacity(raw.len());
    let mut prev_start: Option<T> = None;
    for (k, (start, mut matrix)) in raw.into_iter().enumerate() {
        if matrix.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.dim(),
            });
        }
        if let Some(p) = &prev_start {
            if !(start > *p) || !(start < horizon) {
                return Err(Error::SegmentGap {
                    from: to_f64(p),
                    to: to_f64(&start),
                });
            }
        }
        for i in 0..n {
            for j in 0..n {
                if !to_f64(&matrix[(i, j)]).is_finite() {
                    return Err(Error::NonFiniteRate {
                        row: i,
                        col: j,
                        segment: k,
                    });
                }
                if i != j && matrix[(i, j)] < zero {
                    return Err(Error::NegativeOffDiagonal {
                        row: i,
                        col: j,
                        segment: k,
                    });
                }
            }
        }
        for j in 0..n {
            let sum = (0..n).fold(T::zero(), |acc, i| acc + matrix[(i, j)].clone());
            if abs(&sum) <= opts.tol {
                continue;
            }
            match &opts.repair_tol {
                Some(r) if abs(&sum) <= *r => {
                    matrix[(j, j)] = matrix[(j, j)].clone() - sum;
                }
                _ => {
                    return Err(Error::ColumnSumNonzero {
                        col: j,
                        value: to_f64(&sum),
                        segment: k,
                    })
                }
            }
        }
        prev_start = Some(start.clone());
        segments.push(Segment { start, matrix });
    }
    Ok(Generator {
        n_states: n,
        segments,
        horizon,
    })
}

impl<T: Field> Generator<T> {
    /// Time-homogeneous generator, validated with `opts`.
    pub fn homogeneous(
        matrix: SquareMatrix<T>,
        horizon: T,
        opts: &ValidationOptions<T>,
    ) -> Result<Self> {
        validate_generator(vec![(T::zero(), matrix)], horizon, opts)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn horizon(&self) -> &T {
        &self.horizon
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    /// End of segment `k` (the next start, or the horizon).
    pub fn segment_end(&self, k: usize) -> &T {
        self.segments
            .get(k + 1)
            .map(|s| &s.start)
            .unwrap_or(&self.horizon)
    }

    /// Index of the segment active at `t`: the last one with `start <= t`.
    pub fn segment_index_at(&self, t: &T) -> usize {
        self.segments
            .iter()
            .rposition(|s| s.start <= *t)
            .unwrap_or(0)
    }

    pub fn matrix_at(&self, t: &T) -> &SquareMatrix<T> {
        &self.segments[self.segment_index_at(t)].matrix
    }

    pub fn check_state(&self, state: State) -> Result<()> {
        if state.0 >= self.n_states {
            return Err(Error::StateOutOfRange {
                index: state.0,
                n_states: self.n_states,
            });
        }
        Ok(())
    }

    fn check_time(&self, t: &T) -> Result<()> {
        if *t < T::zero() || *t > self.horizon {
            return Err(Error::TimeOutOfRange {
                t: to_f64(t),
                horizon: to_f64(&self.horizon),
            });
        }
        Ok(())
    }
}

/// The matrix `d⟨M,M⟩/dt` evaluated at `X = e_state`. Symmetric, PSD, with
/// zero row and column sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiMatrix<T>(SquareMatrix<T>);

impl<T: Field> PsiMatrix<T> {
    pub fn matrix(&self) -> &SquareMatrix<T> {
        &self.0
    }

    pub fn quadratic_form(&self, z: &[T]) -> T {
        self.0.quadratic_form(z)
    }
}

/// `diag(A e_s) − A diag(e_s) − diag(e_s) Aᵀ` for a single rate matrix.
pub fn psi_of_matrix<T: Field>(a: &SquareMatrix<T>, state: State) -> PsiMatrix<T> {
    let s = state.0;
    PsiMatrix(SquareMatrix::from_fn(a.dim(), |k, l| {
        let mut v = T::zero();
        if k == l {
            v = v + a[(k, s)].clone();
        }
        if l == s {
            v = v - a[(k, l)].clone();
        }
        if k == s {
            v = v - a[(l, k)].clone();
        }
        v
    }))
}

pub fn psi<T: Field>(gen: &Generator<T>, t: &T, state: State) -> Result<PsiMatrix<T>> {
    gen.check_state(state)?;
    gen.check_time(t)?;
    Ok(psi_of_matrix(gen.matrix_at(t), state))
}

/// `zᵀ Ψ(A_t, e_state) z`.
pub fn seminorm_sq<T: Field>(z: &[T], gen: &Generator<T>, t: &T, state: State) -> Result<T> {
    if z.len() != gen.n_states() {
        return Err(Error::DimensionMismatch {
            expected: gen.n_states(),
            got: z.len(),
        });
    }
    Ok(psi(gen, t, state)?.quadratic_form(z))
}

/// `z1 ∼_M z2` up to `tol` on the squared seminorm.
pub fn m_equivalent<T: Field>(
    z1: &[T],
    z2: &[T],
    gen: &Generator<T>,
    t: &T,
    state: State,
    tol: &T,
) -> Result<bool> {
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch {
            expected: z1.len(),
            got: z2.len(),
        });
    }
    let diff: Vec<T> = z1
        .iter()
        .zip(z2)
        .map(|(a, b)| a.clone() - b.clone())
        .collect();
    Ok(seminorm_sq(&diff, gen, t, state)? <= *tol)
}

/// One realised trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath<T> {
    pub initial: State,
    /// `(time, new state)`, times strictly increasing in `(0, horizon]`.
    pub jumps: Vec<(T, State)>,
    pub horizon: T,
}

impl<T: Real> ChainPath<T> {
    /// State occupied at `t` (right-continuous).
    pub fn state_at(&self, t: T) -> State {
        let k = self.jumps.partition_point(|(s, _)| *s <= t);
        if k == 0 {
            self.initial
        } else {
            self.jumps[k - 1].1
        }
    }

    /// States at each of the (ascending) `times`.
    pub fn sample(&self, times: &[T]) -> Vec<State> {
        let mut out = Vec::with_capacity(times.len());
        let mut k = 0;
        let mut cur = self.initial;
        for &t in times {
            while k < self.jumps.len() && self.jumps[k].0 <= t {
                cur = self.jumps[k].1;
                k += 1;
            }
            out.push(cur);
        }
        out
    }
}

/// Exact simulation with a ChaCha stream seeded from `seed`.
pub fn simulate_path<T: Real>(gen: &Generator<T>, start: State, seed: u64) -> Result<ChainPath<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_path_with(gen, start, &mut rng)
}

/// Exact jump-chain simulation. Within a segment the holding time in `j` is
/// exponential with the total exit rate of column `j`; at a segment boundary
/// the clock restarts (memorylessness).
pub fn simulate_path_with<T: Real, R: Rng + ?Sized>(
    gen: &Generator<T>,
    start: State,
    rng: &mut R,
) -> Result<ChainPath<T>> {
    gen.check_state(start)?;
    let n = gen.n_states();
    let horizon = *gen.horizon();
    let mut jumps = Vec::new();
    let mut t = T::zero();
    let mut cur = start.0;
    let mut seg = 0;
    while t < horizon && seg < gen.segments().len() {
        let a = &gen.segments()[seg].matrix;
        let seg_end = *gen.segment_end(seg);
        let exit: T = (0..n).filter(|&i| i != cur).map(|i| a[(i, cur)]).sum();
        if !(exit > T::zero()) {
            t = seg_end;
            seg += 1;
            continue;
        }
        let u: f64 = rng.gen();
        let hold = -lit::<T>((1.0 - u).ln()) / exit;
        if t + hold >= seg_end {
            t = seg_end;
            seg += 1;
            continue;
        }
        t = t + hold;
        let target = lit::<T>(rng.gen::<f64>()) * exit;
        let mut acc = T::zero();
        let mut next = None;
        for i in (0..n).filter(|&i| i != cur && a[(i, cur)] > T::zero()) {
            acc = acc + a[(i, cur)];
            next = Some(i);
            if target < acc {
                break;
            }
        }
        // exit > 0 guarantees at least one positive rate
        cur = next.expect("positive exit rate has a destination");
        jumps.push((t, State(cur)));
    }
    Ok(ChainPath {
        initial: start,
        jumps,
        horizon,
    })
}

const HEADER: &str =
    "# column convention: entry (i, j) is the rate of jumping from state j to state i";

/// Parses the plain-text generator format.
///
/// ```text
/// # column convention: entry (i, j) is the rate of jumping from state j to state i
/// N K
/// t_start            (K times, each followed by N rows of N numbers)
/// ...
/// ```
///
/// The leading comment naming the column convention is mandatory.
pub fn parse_generator<T: Real>(
    text: &str,
    horizon: T,
    opts: &ValidationOptions<T>,
) -> Result<Generator<T>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, l)) if l.starts_with('#') && l.to_ascii_lowercase().contains("column") => {}
        Some((line, _)) => {
            return Err(Error::Parse {
                line,
                msg: "missing column-convention header comment".into(),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 0,
                msg: "empty generator file".into(),
            })
        }
    }
    let mut tokens = lines
        .filter(|(_, l)| !l.starts_with('#'))
        .flat_map(|(line, l)| l.split_whitespace().map(move |tok| (line, tok)));
    let mut next = |what: &str| {
        tokens.next().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of file reading {what}"),
        })
    };
    let parse_usize = |(line, tok): (usize, &str)| {
        tok.parse::<usize>().map_err(|_| Error::Parse {
            line,
            msg: format!("expected integer, got `{tok}`"),
        })
    };
    let parse_real = |(line, tok): (usize, &str)| {
        tok.parse::<T>().map_err(|_| Error::Parse {
            line,
            msg: format!("expected number, got `{tok}`"),
        })
    };
    let n = parse_usize(next("state count")?)?;
    let k = parse_usize(next("segment count")?)?;
    if n == 0 || k == 0 {
        return Err(Error::Parse {
            line: 0,
            msg: "state and segment counts must be positive".into(),
        });
    }
    let mut raw = Vec::with_capacity(k);
    for _ in 0..k {
        let start = parse_real(next("segment start")?)?;
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = parse_real(next("matrix entry")?)?;
            }
        }
        raw.push((start, m));
    }
    if let Some((line, tok)) = tokens.next() {
        return Err(Error::Parse {
            line,
            msg: format!("trailing token `{tok}`"),
        });
    }
    validate_generator(raw, horizon, opts)
}

pub fn format_generator<T: Real>(gen: &Generator<T>) -> String {
    let mut out = format!("{HEADER}\n{} {}\n", gen.n_states(), gen.segments().len());
    for seg in gen.segments() {
        out.push_str(&format!("{}\n", seg.start));
        for row in seg.matrix.to_rows() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
    }
    out
}
