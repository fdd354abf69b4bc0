use rand::seq::SliceRandom;
use rand::Rng;

/// Perfect maze on an odd `size×size` grid by iterative recursive
/// backtracking. Cells at odd coordinates are rooms; `true` marks a wall.
pub fn generate<R: Rng>(size: usize, rng: &mut R) -> Vec<bool> {
    let mut walls = vec![true; size * size];
    let rooms = (size - 1) / 2;
    let mut visited = vec![false; rooms * rooms];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    walls[size + 1] = false;
    while let Some(&(r, c)) = stack.last() {
        let mut options: Vec<(usize, usize)> = Vec::with_capacity(4);
        if r > 0 && !visited[(r - 1) * rooms + c] {
            options.push((r - 1, c));
        }
        if r + 1 < rooms && !visited[(r + 1) * rooms + c] {
            options.push((r + 1, c));
        }
        if c > 0 && !visited[r * rooms + c - 1] {
            options.push((r, c - 1));
        }
        if c + 1 < rooms && !visited[r * rooms + c + 1] {
            options.push((r, c + 1));
        }
        match options.choose(rng) {
            None => {
                stack.pop();
            }
            Some(&(nr, nc)) => {
                visited[nr * rooms + nc] = true;
                let (gr, gc) = (2 * r + 1, 2 * c + 1);
                let (ngr, ngc) = (2 * nr + 1, 2 * nc + 1);
                walls[((gr + ngr) / 2) * size + (gc + ngc) / 2] = false;
                walls[ngr * size + ngc] = false;
                stack.push((nr, nc));
            }
        }
    }
    walls
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn reachable(walls: &[bool], size: usize, from: (usize, usize)) -> usize {
        let mut seen = vec![false; walls.len()];
        let mut queue = VecDeque::from([from]);
        seen[from.0 * size + from.1] = true;
        let mut count = 0;
        while let Some((r, c)) = queue.pop_front() {
            count += 1;
            for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = ((r as isize + dr) as usize, (c as isize + dc) as usize);
                let idx = nr * size + nc;
                if !walls[idx] && !seen[idx] {
                    seen[idx] = true;
                    queue.push_back((nr, nc));
                }
            }
        }
        count
    }

    #[test]
    fn maze_is_connected_tree_with_closed_border() {
        for seed in 0..20 {
            let mut rng = crate::seeding::rng(&[seed]);
            let size = 9;
            let walls = generate(size, &mut rng);
            for i in 0..size {
                assert!(walls[i] && walls[(size - 1) * size + i]);
                assert!(walls[i * size] && walls[i * size + size - 1]);
            }
            let open = walls.iter().filter(|w| !**w).count();
            // 16 rooms joined by 15 corridors
            assert_eq!(open, 31);
            assert_eq!(reachable(&walls, size, (1, 1)), open);
        }
    }
}
