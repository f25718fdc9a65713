//! Largest-component selection and 0.5-level marching squares on binary slices.

use std::collections::VecDeque;

/// Points fewer than this are not worth an ellipse fit.
pub const MIN_CONTOUR_POINTS: usize = 6;

/// Labels of the largest 4-connected foreground component of an x-fastest
/// `nx × ny` slice, as a boolean image. Ties go to the component found first
/// in scan order. `None` if the slice is empty.
pub fn largest_component(slice: &[u8], nx: usize, ny: usize) -> Option<Vec<bool>> {
    assert_eq!(slice.len(), nx * ny, "slice length must be nx*ny");
    let mut label = vec![0u32; nx * ny];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..nx * ny {
        if slice[start] == 0 || label[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        label[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (i, j) = (p % nx, p / nx);
            let mut visit = |q: usize| {
                if slice[q] != 0 && label[q] == 0 {
                    label[q] = id;
                    queue.push_back(q);
                }
            };
            if i > 0 {
                visit(p - 1);
            }
            if i + 1 < nx {
                visit(p + 1);
            }
            if j > 0 {
                visit(p - nx);
            }
            if j + 1 < ny {
                visit(p + nx);
            }
        }
        sizes.push(size);
    }
    let best = (1..sizes.len()).fold(None, |best: Option<usize>, id| match best {
        Some(b) if sizes[b] >= sizes[id] => Some(b),
        _ => Some(id),
    })?;
    Some(label.iter().map(|&l| l as usize == best).collect())
}

/// All closed 0.5-level contours of a boolean image, in pixel coordinates
/// (pixel `(i, j)` is centred at `(i, j)`). Each loop is oriented
/// counter-clockwise. Diagonal-only contacts are treated as separate, which
/// matches 4-connectivity.
pub fn marching_squares(img: &[bool], nx: usize, ny: usize) -> Vec<Vec<[f64; 2]>> {
    // pad by one so every loop closes
    let (px, py) = (nx + 2, ny + 2);
    let at = |i: usize, j: usize| -> bool {
        i >= 1 && j >= 1 && i <= nx && j <= ny && img[(i - 1) + nx * (j - 1)]
    };
    // crossing points live on lattice edges: id 2p is the edge p -> p+x,
    // id 2p+1 is the edge p -> p+y, p being a padded pixel index
    let h = |i: usize, j: usize| 2 * (i + px * j);
    let v = |i: usize, j: usize| 2 * (i + px * j) + 1;
    let mut nbr = vec![[usize::MAX; 2]; 2 * px * py];
    let mut link = |a: usize, b: usize| {
        for (x, y) in [(a, b), (b, a)] {
            let slot = if nbr[x][0] == usize::MAX { 0 } else { 1 };
            nbr[x][slot] = y;
        }
    };
    for j in 0..py - 1 {
        for i in 0..px - 1 {
            let c = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let (b, r, t, l) = (h(i, j), v(i + 1, j), h(i, j + 1), v(i, j));
            match c {
                [true, false, true, false] => {
                    link(b, l);
                    link(r, t);
                }
                [false, true, false, true] => {
                    link(b, r);
                    link(l, t);
                }
                _ => {
                    let mut ends = Vec::with_capacity(2);
                    if c[0] != c[1] {
                        ends.push(b);
                    }
                    if c[1] != c[2] {
                        ends.push(r);
                    }
                    if c[3] != c[2] {
                        ends.push(t);
                    }
                    if c[0] != c[3] {
                        ends.push(l);
                    }
                    if let [a, e] = ends[..] {
                        link(a, e);
                    }
                }
            }
        }
    }

    let point = |id: usize| -> [f64; 2] {
        let p = id / 2;
        let (i, j) = ((p % px) as f64 - 1.0, (p / px) as f64 - 1.0);
        if id % 2 == 0 {
            [i + 0.5, j]
        } else {
            [i, j + 0.5]
        }
    };
    let mut seen = vec![false; nbr.len()];
    let mut loops = Vec::new();
    for start in 0..nbr.len() {
        if seen[start] || nbr[start][0] == usize::MAX {
            continue;
        }
        let mut ring = Vec::new();
        let (mut prev, mut cur) = (usize::MAX, start);
        loop {
            seen[cur] = true;
            ring.push(point(cur));
            let next = if nbr[cur][0] != prev { nbr[cur][0] } else { nbr[cur][1] };
            prev = cur;
            cur = next;
            if cur == start {
                break;
            }
        }
        if signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        loops.push(ring);
    }
    loops
}

/// Shoelace area, positive for counter-clockwise loops.
pub fn signed_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|a| {
            let (p, q) = (ring[a], ring[(a + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Outer boundary of the largest 4-connected component of an x-fastest
/// slice, in mm. `None` for empty slices and for contours with fewer than
/// [`MIN_CONTOUR_POINTS`] points.
pub fn extract_slice_contour(slice: &[u8], nx: usize, ny: usize, spacing_mm: [f64; 2]) -> Option<Vec<[f64; 2]>> {
    let component = largest_component(slice, nx, ny)?;
    // holes give inner loops; the outer boundary encloses the most area
    let outer = marching_squares(&component, nx, ny)
        .into_iter()
        .max_by(|a, b| signed_area(a).total_cmp(&signed_area(b)))?;
    if outer.len() < MIN_CONTOUR_POINTS {
        return None;
    }
    Some(
        outer
            .into_iter()
            .map(|[i, j]| [i * spacing_mm[0], j * spacing_mm[1]])
            .collect(),
    )
}
