use std::io::{BufRead, Write};
use std::path::Path;

use super::{Field, SpaceGrid};
use crate::error::{Error, Result};
use crate::format::g17;

/// States `u_0 … u_M` on a uniform time grid `t_k = k·τ` over `[0, T]`.
///
/// When `initial_locked` is set, `u_0` is the initial datum and cannot be
/// replaced through [`Trajectory::set_state`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: SpaceGrid,
    components: usize,
    times: Vec<f64>,
    states: Vec<Field>,
    initial_locked: bool,
}

impl Trajectory {
    /// Constant-in-time extension of `w0` over `M` intervals of `[0, horizon]`.
    pub fn constant(w0: &Field, horizon: f64, intervals: usize) -> Result<Self> {
        Self::from_states(horizon, vec![w0.clone(); intervals + 1])
    }

    pub fn from_states(horizon: f64, states: Vec<Field>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidInput("trajectory needs at least one interval".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!("time horizon must be positive, got {horizon}")));
        }
        let first = &states[0];
        if states.iter().any(|s| !s.same_shape(first)) {
            return Err(Error::ShapeMismatch("trajectory states differ in shape".into()));
        }
        if states.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("trajectory has non-finite values".into()));
        }
        let m = states.len() - 1;
        let tau = horizon / m as f64;
        let times = (0..=m).map(|k| if k == m { horizon } else { k as f64 * tau }).collect();
        Ok(Self {
            grid: first.grid(),
            components: first.components(),
            times,
            states,
            initial_locked: true,
        })
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.states.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn tau(&self) -> f64 {
        self.horizon() / self.intervals() as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &Field {
        &self.states[k]
    }

    pub fn initial_locked(&self) -> bool {
        self.initial_locked
    }

    pub fn unlock_initial(&mut self) {
        self.initial_locked = false;
    }

    pub fn set_state(&mut self, k: usize, field: Field) -> Result<()> {
        if k >= self.states.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.states.len(),
            });
        }
        if k == 0 && self.initial_locked {
            return Err(Error::InvalidInput("initial state is locked".into()));
        }
        if !field.same_shape(&self.states[0]) {
            return Err(Error::ShapeMismatch("state does not match trajectory grid".into()));
        }
        self.states[k] = field;
        Ok(())
    }

    /// Midpoint `t_{k+½}` of interval `k`.
    pub fn mid_time(&self, k: usize) -> f64 {
        0.5 * (self.times[k] + self.times[k + 1])
    }

    /// `(u_k + u_{k+1}) / 2`.
    pub fn midpoint(&self, k: usize) -> Result<Field> {
        self.check_interval(k)?;
        let a = &self.states[k];
        let b = &self.states[k + 1];
        Ok(a.with_values(a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect()))
    }

    fn check_interval(&self, k: usize) -> Result<()> {
        if k >= self.intervals() {
            Err(Error::IndexOutOfRange {
                index: k,
                len: self.intervals(),
            })
        } else {
            Ok(())
        }
    }

    /// Flattened unknowns `u_1 … u_M` (the locked `u_0` is excluded).
    pub fn free_values(&self) -> Vec<f64> {
        self.states[1..].iter().flat_map(|s| s.values().iter().copied()).collect()
    }

    /// Inverse of [`Trajectory::free_values`].
    pub fn with_free_values(&self, values: &[f64]) -> Trajectory {
        let n = self.states[0].len();
        debug_assert_eq!(values.len(), n * self.intervals());
        let mut out = self.clone();
        for (k, chunk) in values.chunks(n).enumerate() {
            out.states[k + 1] = self.states[0].with_values(chunk.to_vec());
        }
        out
    }

    /// Writes `t,node_0,...,node_{n-1}` with one row per time node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states[0].len();
        let mut header = String::from("t");
        for j in 0..n {
            header.push_str(&format!(",node_{j}"));
        }
        writeln!(w, "{header}")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut line = g17(*t);
            for v in s.values() {
                line.push(',');
                line.push_str(&g17(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`Trajectory::write_csv`]. Time nodes must be
    /// uniform and start at zero.
    pub fn read_csv<R: BufRead>(r: R, grid: SpaceGrid, components: usize) -> Result<Self> {
        let rows = read_rows(r, grid, components)?;
        let (times, states): (Vec<f64>, Vec<Field>) = rows.into_iter().unzip();
        if times.len() < 2 {
            return Err(Error::InvalidInput("trajectory csv needs at least two rows".into()));
        }
        let horizon = *times.last().unwrap();
        let traj = Self::from_states(horizon, states)?;
        let tol = 1e-12 * horizon;
        if times.iter().zip(&traj.times).any(|(a, b)| (a - b).abs() > tol) {
            return Err(Error::InvalidInput("trajectory csv times are not uniform from 0".into()));
        }
        Ok(Self { times, ..traj })
    }

    pub fn load_csv(path: &Path, grid: SpaceGrid, components: usize) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), grid, components)
    }
}

/// Parses trajectory-format rows into `(t, field)` pairs.
pub(crate) fn read_rows<R: BufRead>(r: R, grid: SpaceGrid, components: usize) -> Result<Vec<(f64, Field)>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty trajectory csv".into()))??;
    let n = grid.node_count() * components;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() != n + 1 || cols[0] != "t" {
        return Err(Error::ShapeMismatch(format!(
            "csv header has {} columns, expected t plus {n} nodes",
            cols.len()
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let nums: std::result::Result<Vec<f64>, _> = line.trim_end().split(',').map(str::parse::<f64>).collect();
        let nums = nums.map_err(|e| Error::InvalidInput(format!("csv row {}: {e}", lineno + 2)))?;
        if nums.len() != n + 1 {
            return Err(Error::ShapeMismatch(format!("csv row {} has {} columns", lineno + 2, nums.len())));
        }
        rows.push((nums[0], Field::from_values(grid, components, nums[1..].to_vec())?));
    }
    Ok(rows)
}

/// `(u_{k+1} − u_k)/τ`, the value of `dv/dt` on interval `k`.
pub fn paired_time_derivative(traj: &Trajectory, k: usize) -> Result<Field> {
    traj.check_interval(k)?;
    let inv_tau = 1.0 / traj.tau();
    let a = &traj.states[k];
    let b = &traj.states[k + 1];
    Ok(a.with_values(
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (y - x) * inv_tau)
            .collect(),
    ))
}

/// `Σ_k τ ⟨(u_k+u_{k+1})/2, (u_{k+1}−u_k)/τ⟩_H`. Telescopes to
/// `½(‖u_M‖² − ‖u_0‖²)`.
pub fn midpoint_pairing(traj: &Trajectory) -> f64 {
    let tau = traj.tau();
    (0..traj.intervals())
        .map(|k| {
            let m = traj.midpoint(k).expect("valid interval");
            let d = paired_time_derivative(traj, k).expect("valid interval");
            tau * m.h_inner(&d)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_traj(grid: SpaceGrid, k: usize, m: usize, rng: &mut ChaCha8Rng) -> Trajectory {
        let states = (0..=m)
            .map(|_| Field::from_fn(grid, k, |_, _| rng.gen_range(-2.0..2.0)))
            .collect();
        Trajectory::from_states(0.3, states).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let grid = SpaceGrid::new(1, 4).unwrap();
        let phi = Field::from_fn(grid, 1, |x, _| x[0].sin());
        let c = Trajectory::constant(&phi, 1.0, 5).unwrap();
        for k in 0..5 {
            assert!(paired_time_derivative(&c, k).unwrap().values().iter().all(|v| *v == 0.0));
        }
        let lin = Trajectory::from_states(1.0, (0..=4).map(|k| phi.scaled(k as f64 * 0.25)).collect()).unwrap();
        for k in 0..4 {
            let d = paired_time_derivative(&lin, k).unwrap();
            for (a, b) in d.values().iter().zip(phi.values()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert!(matches!(
            paired_time_derivative(&lin, 4),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn midpoint_pairing_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let t = random_traj(SpaceGrid::new(1, 9).unwrap(), 1, 12, &mut rng);
            let lhs = midpoint_pairing(&t);
            let rhs = 0.5 * (t.state(12).h_norm().powi(2) - t.state(0).h_norm().powi(2));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_state_is_locked() {
        let grid = SpaceGrid::new(1, 3).unwrap();
        let mut t = Trajectory::constant(&Field::zeros(grid, 1), 1.0, 2).unwrap();
        assert!(t.set_state(0, Field::zeros(grid, 1)).is_err());
        assert!(t.set_state(3, Field::zeros(grid, 1)).is_err());
        t.set_state(2, Field::from_values(grid, 1, vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        t.unlock_initial();
        t.set_state(0, Field::zeros(grid, 1)).unwrap();
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = SpaceGrid::new(2, 3).unwrap();
        let t = random_traj(grid, 2, 7, &mut rng);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,node_0,node_1,"));
        assert!(text.lines().next().unwrap().ends_with(",node_17"));
        let back = Trajectory::read_csv(&buf[..], grid, 2).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_rejects_wrong_width() {
        let grid = SpaceGrid::new(1, 3).unwrap();
        let text = "t,node_0,node_1\n0,1,2\n1,1,2\n";
        assert!(Trajectory::read_csv(text.as_bytes(), grid, 1).is_err());
    }
}
