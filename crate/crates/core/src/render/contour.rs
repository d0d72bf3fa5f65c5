//! Marching squares on a scalar field sampled at pixel centers.

/// A contour piece in pixel coordinates (pixel `(c, r)` has its center at
/// `(c + 0.5, r + 0.5)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

#[derive(Clone, Copy)]
enum Edge {
    Top,
    Right,
    Bottom,
    Left,
}

/// Iso-line of `field` (row-major, `width x height`) at `level`, with linear
/// interpolation along cell edges. Values equal to the level count as above.
/// Saddle cells are resolved by the mean of their four corners.
pub fn marching_squares(field: &[f64], width: usize, height: usize, level: f64) -> Vec<Segment> {
    assert_eq!(field.len(), width * height);
    let mut out = Vec::new();
    if width < 2 || height < 2 {
        return out;
    }
    for j in 0..height - 1 {
        for i in 0..width - 1 {
            let tl = field[j * width + i];
            let tr = field[j * width + i + 1];
            let br = field[(j + 1) * width + i + 1];
            let bl = field[(j + 1) * width + i];
            let case = (usize::from(tl >= level) << 3)
                | (usize::from(tr >= level) << 2)
                | (usize::from(br >= level) << 1)
                | usize::from(bl >= level);
            if case == 0 || case == 15 {
                continue;
            }
            let center_above = (tl + tr + br + bl) / 4.0 >= level;
            let (x0, y0) = (i as f64 + 0.5, j as f64 + 0.5);
            let point = |e: Edge| -> (f64, f64) {
                let (va, vb, pa, pb) = match e {
                    Edge::Top => (tl, tr, (x0, y0), (x0 + 1.0, y0)),
                    Edge::Right => (tr, br, (x0 + 1.0, y0), (x0 + 1.0, y0 + 1.0)),
                    Edge::Bottom => (bl, br, (x0, y0 + 1.0), (x0 + 1.0, y0 + 1.0)),
                    Edge::Left => (tl, bl, (x0, y0), (x0, y0 + 1.0)),
                };
                let t = if vb == va { 0.5 } else { ((level - va) / (vb - va)).clamp(0.0, 1.0) };
                (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1))
            };
            let mut seg = |e1: Edge, e2: Edge| out.push(Segment { a: point(e1), b: point(e2) });
            use Edge::*;
            match case {
                1 | 14 => seg(Left, Bottom),
                2 | 13 => seg(Bottom, Right),
                3 | 12 => seg(Left, Right),
                4 | 11 => seg(Top, Right),
                6 | 9 => seg(Top, Bottom),
                7 | 8 => seg(Left, Top),
                5 => {
                    if center_above {
                        seg(Left, Top);
                        seg(Bottom, Right);
                    } else {
                        seg(Top, Right);
                        seg(Left, Bottom);
                    }
                }
                10 => {
                    if center_above {
                        seg(Top, Right);
                        seg(Left, Bottom);
                    } else {
                        seg(Left, Top);
                        seg(Bottom, Right);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    out
}
