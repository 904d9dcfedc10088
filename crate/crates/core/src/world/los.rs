//! Supercover line traversal.
//!
//! Returns every cell that the segment between two cell centres touches,
//! including both cells beside a corner the segment passes exactly through.
//! A wall therefore blocks diagonal sight lines that merely graze it.

use super::Cell;

/// Cells touched by the segment from the centre of `from` to the centre of
/// `to`, in traversal order, endpoints included.
pub fn supercover(from: Cell, to: Cell) -> Vec<Cell> {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let nx = dx.unsigned_abs() as i64;
    let ny = dy.unsigned_abs() as i64;
    let sx = dx.signum();
    let sy = dy.signum();

    let mut out = Vec::with_capacity((nx + ny + 1) as usize);
    let mut p = from;
    out.push(p);
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        // Compare where the segment crosses the next vertical boundary with
        // where it crosses the next horizontal one, in integer arithmetic.
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            out.push(Cell::new(p.x + sx, p.y));
            out.push(Cell::new(p.x, p.y + sy));
            p = Cell::new(p.x + sx, p.y + sy);
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            p = Cell::new(p.x + sx, p.y);
            ix += 1;
        } else {
            p = Cell::new(p.x, p.y + sy);
            iy += 1;
        }
        out.push(p);
    }
    out
}

/// True when no cell strictly between the endpoints satisfies `blocked`.
pub fn line_clear(from: Cell, to: Cell, mut blocked: impl FnMut(Cell) -> bool) -> bool {
    supercover(from, to)
        .into_iter()
        .filter(|c| *c != from && *c != to)
        .all(|c| !blocked(c))
}
