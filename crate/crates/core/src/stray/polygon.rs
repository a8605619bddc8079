//! Planar polygon helpers used by scene rasterization.

pub type Point2 = [f64; 2];

/// Shoelace area (positive for counter-clockwise polygons).
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Even-odd point-in-polygon test.
pub fn contains(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn bounding_box(poly: &[Point2]) -> (Point2, Point2) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let orient = |p: Point2, q: Point2, r: Point2| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// True when no two non-adjacent edges properly intersect.
pub fn is_simple(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Counter-clockwise polygon approximating an ellipse.
pub fn ellipse(center: Point2, semi_major: f64, semi_minor: f64, rotation: f64, vertices: usize) -> Vec<Point2> {
    let (s, c) = rotation.sin_cos();
    (0..vertices)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / vertices as f64;
            let (x, y) = (semi_major * t.cos(), semi_minor * t.sin());
            [center[0] + c * x - s * y, center[1] + s * x + c * y]
        })
        .collect()
}

/// Sutherland-Hodgman clip of `subject` by a convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let inside = |p: Point2| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0;
        let intersect = |p: Point2, q: Point2| {
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let t = (ex * (p[1] - a[1]) - ey * (p[0] - a[0])) / (ey * dx - ex * dy);
            [p[0] + t * dx, p[1] + t * dy]
        };
        let input = std::mem::take(&mut out);
        let m = input.len();
        for k in 0..m {
            let (cur, prev) = (input[k], input[(k + m - 1) % m]);
            match (inside(cur), inside(prev)) {
                (true, true) => out.push(cur),
                (true, false) => {
                    out.push(intersect(prev, cur));
                    out.push(cur);
                }
                (false, true) => out.push(intersect(prev, cur)),
                (false, false) => {}
            }
        }
    }
    out
}
