//! Fixed palette, one pixel per cell.

use crate::tensorgrad::{Real, Tensor};

pub type Rgb = [Real; 3];

pub const FLOOR: Rgb = [0.0, 0.0, 0.0];
pub const WALL: Rgb = [0.25, 0.25, 0.25];
pub const AGENT: Rgb = [1.0, 1.0, 1.0];
pub const GOAL: Rgb = [0.0, 1.0, 0.0];
pub const NEUTRAL: Rgb = [0.5, 0.5, 0.5];
pub const RED: Rgb = [1.0, 0.0, 0.0];
pub const GREEN: Rgb = [0.0, 1.0, 0.0];

/// Item colours for the k-item task, in collection order.
pub const ITEM_COLORS: [Rgb; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.5, 0.0],
];

/// Every colour the grid renderer can emit.
pub fn palette() -> Vec<Rgb> {
    let mut p = vec![FLOOR, WALL, AGENT, GOAL, NEUTRAL, RED, GREEN];
    p.extend_from_slice(&ITEM_COLORS);
    p
}

/// Paints a `side×side` window whose top-left corner sits at grid coordinate
/// `(row0, col0)` (possibly negative); `color_at` is asked only for in-bounds
/// cells and everything outside the grid is drawn as wall.
pub fn paint_window(
    side: usize,
    row0: isize,
    col0: isize,
    grid_size: usize,
    mut color_at: impl FnMut(usize, usize) -> Rgb,
) -> Tensor {
    let mut data = vec![0.0; 3 * side * side];
    for y in 0..side {
        for x in 0..side {
            let (r, c) = (row0 + y as isize, col0 + x as isize);
            let in_bounds = r >= 0 && c >= 0 && (r as usize) < grid_size && (c as usize) < grid_size;
            let rgb = if in_bounds { color_at(r as usize, c as usize) } else { WALL };
            for ch in 0..3 {
                data[ch * side * side + y * side + x] = rgb[ch];
            }
        }
    }
    Tensor::new(&[3, side, side], data).expect("window shape")
}
