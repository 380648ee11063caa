//! Deterministic point sets: Halton sequences and boundary grids.

use genlearn::Point;

use crate::CliError;

const PRIMES: [u32; 6] = [2, 3, 5, 7, 11, 13];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// The first `count` Halton points in `[0, 1)^dims`, starting from index 1.
pub fn halton(count: usize, dims: usize) -> Result<Vec<Point>, CliError> {
    if count == 0 || dims == 0 || dims > PRIMES.len() {
        return Err(CliError::Config(format!(
            "halton needs count >= 1 and 1 <= dims <= {}, got {count} x {dims}",
            PRIMES.len()
        )));
    }
    Ok((1..=count as u64)
        .map(|i| Point::new(PRIMES[..dims].iter().map(|&p| radical_inverse(i, p)).collect::<Vec<f64>>()))
        .collect())
}

/// `n` points equally spaced by arc length on the boundary of the unit
/// square, counterclockwise from the origin.
pub fn boundary_grid(n: usize) -> Result<Vec<Point>, CliError> {
    if n < 4 {
        return Err(CliError::Config(format!("boundary grid needs at least 4 points, got {n}")));
    }
    Ok((0..n)
        .map(|k| {
            // exact arithmetic on the corners: s in [0, 4)
            let s = 4.0 * k as f64 / n as f64;
            let side = (s.floor() as usize).min(3);
            let t = s - side as f64;
            let (a, b) = match side {
                0 => (t, 0.0),
                1 => (1.0, t),
                2 => (1.0 - t, 1.0),
                _ => (0.0, 1.0 - t),
            };
            Point::from([a, b])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_halton_points() {
        let p = halton(3, 1).unwrap();
        let xs: Vec<f64> = p.iter().map(|q| q.0[0]).collect();
        assert_eq!(xs, vec![0.5, 0.25, 0.75]);
        let q = halton(1, 2).unwrap();
        assert_eq!(q[0].0[0], 0.5);
        assert!((q[0].0[1] - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(halton(50, 3).unwrap(), halton(50, 3).unwrap());
        assert!(halton(1, 7).is_err());
    }

    #[test]
    fn halton_projection_gaps_are_small() {
        let mut xs: Vec<f64> = halton(256, 1).unwrap().iter().map(|p| p.0[0]).collect();
        xs.push(0.0);
        xs.push(1.0);
        xs.sort_by(f64::total_cmp);
        let gap = xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(gap <= 2.0 / 256.0, "{gap}");
    }

    #[test]
    fn boundary_corners_and_midpoints() {
        let c: Vec<[f64; 2]> = boundary_grid(4).unwrap().iter().map(|p| [p.0[0], p.0[1]]).collect();
        assert_eq!(c, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        let e: Vec<[f64; 2]> = boundary_grid(8).unwrap().iter().map(|p| [p.0[0], p.0[1]]).collect();
        assert_eq!(
            e,
            vec![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 0.5], [1.0, 1.0], [0.5, 1.0], [0.0, 1.0], [0.0, 0.5]]
        );
        assert!(boundary_grid(3).is_err());
    }

    proptest! {
        #[test]
        fn boundary_points_lie_on_the_boundary(n in 4usize..500) {
            for p in boundary_grid(n).unwrap() {
                let on = p.0.iter().any(|v| v.min(1.0 - v) == 0.0);
                prop_assert!(on, "{:?}", p);
                prop_assert!(p.0.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn halton_points_are_in_the_unit_cube(count in 1usize..300, dims in 1usize..=6) {
            for p in halton(count, dims).unwrap() {
                prop_assert!(p.0.iter().all(|v| (0.0..1.0).contains(v)));
            }
        }
    }
}
