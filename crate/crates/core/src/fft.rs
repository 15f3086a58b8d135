//! Axis-wise FFT helpers on dynamic-dimensional arrays.

use std::sync::Arc;

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    }
}

/// Unnormalized FFT along one axis, in place.
pub fn fft_axis(a: &mut ArrayD<C64>, axis: usize, dir: Direction) {
    let n = a.shape()[axis];
    let fft = plan(n, dir);
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for mut lane in a.lanes_mut(Axis(axis)) {
        for (b, x) in buf.iter_mut().zip(lane.iter()) {
            *b = *x;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (x, b) in lane.iter_mut().zip(buf.iter()) {
            *x = *b;
        }
    }
}

/// Unitary DFT along the listed axes.
pub fn unitary_dft(a: &mut ArrayD<C64>, axes: &[usize], dir: Direction) {
    let mut scale = 1.0;
    for &ax in axes {
        fft_axis(a, ax, dir);
        scale *= a.shape()[ax] as f64;
    }
    let s = 1.0 / scale.sqrt();
    a.mapv_inplace(|z| z * s);
}

/// Applies `f` to every 2-axis slab spanned by axes `(a, b)`.
///
/// `f` receives the input slab (len_a x len_b, row-major) and writes an
/// output slab of shape `out_a x out_b`. The other axes are untouched.
pub fn map_pair<F>(x: &ArrayD<C64>, a: usize, b: usize, out_a: usize, out_b: usize, f: F) -> ArrayD<C64>
where
    F: Fn(&[C64], &mut [C64]),
{
    assert!(a != b);
    let nd = x.ndim();
    let (la, lb) = (x.shape()[a], x.shape()[b]);
    let mut perm: Vec<usize> = (0..nd).filter(|&i| i != a && i != b).collect();
    perm.push(a);
    perm.push(b);
    let xp = x.view().permuted_axes(IxDyn(&perm));
    let xp = xp.as_standard_layout();
    let data = xp.as_slice().expect("standard layout");
    let rest: usize = data.len() / (la * lb);

    let mut out = vec![C64::new(0.0, 0.0); rest * out_a * out_b];
    let mut slab_in = vec![C64::new(0.0, 0.0); la * lb];
    for r in 0..rest {
        slab_in.copy_from_slice(&data[r * la * lb..(r + 1) * la * lb]);
        f(&slab_in, &mut out[r * out_a * out_b..(r + 1) * out_a * out_b]);
    }

    let mut pshape: Vec<usize> = perm[..nd - 2].iter().map(|&i| x.shape()[i]).collect();
    pshape.push(out_a);
    pshape.push(out_b);
    let outp = ArrayD::from_shape_vec(IxDyn(&pshape), out).expect("shape");
    let mut inv = vec![0usize; nd];
    for (pos, &ax) in perm.iter().enumerate() {
        inv[ax] = pos;
    }
    outp.permuted_axes(IxDyn(&inv)).as_standard_layout().to_owned()
}

/// Small dense 1D DFT plan reused across slabs (forward convention e^{-2πi jk/n}).
pub struct Line {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: std::cell::RefCell<Vec<C64>>,
}

impl Line {
    pub fn new(n: usize) -> Self {
        let fwd = plan(n, Direction::Forward);
        let inv = plan(n, Direction::Inverse);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Line { fwd, inv, scratch: std::cell::RefCell::new(vec![C64::new(0.0, 0.0); len]) }
    }

    pub fn run(&self, buf: &mut [C64], dir: Direction) {
        let mut s = self.scratch.borrow_mut();
        match dir {
            Direction::Forward => self.fwd.process_with_scratch(buf, &mut s),
            Direction::Inverse => self.inv.process_with_scratch(buf, &mut s),
        }
    }
}
