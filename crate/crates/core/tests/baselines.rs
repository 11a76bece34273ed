use wein::baselines::{canny, sobel, sobel_edges, CannyConfig};
use wein::data::synth::render_ridges;
use wein::data::{land_boundary, SplitMix64};
use wein::{FeatureMap, Mask, Shape};

fn plane(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> FeatureMap<f64> {
    FeatureMap::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| f(y, x))
}

#[test]
fn canny_on_step_is_one_connected_pixel_per_row() {
    let img = plane(16, 16, |_, x| if x >= 8 { 1.0 } else { 0.0 });
    let cfg = CannyConfig {
        gaussian_sigma: 1.4,
        t_low: 0.5,
        t_high: 1.0,
    };
    let edges = canny(&img, &cfg).unwrap();
    let cols: Vec<Vec<usize>> = (0..16)
        .map(|y| (0..16).filter(|&x| edges.get(y, x)).collect())
        .collect();
    for (y, c) in cols.iter().enumerate() {
        assert_eq!(c.len(), 1, "row {y}: {c:?}");
    }
    for pair in cols.windows(2) {
        assert!(pair[0][0].abs_diff(pair[1][0]) <= 1);
    }
    assert!(cols.iter().all(|c| c[0] == 7 || c[0] == 8));
}

#[test]
fn rotating_by_ninety_degrees_swaps_gradient_components() {
    let mut rng = SplitMix64::new(3);
    let (h, w) = (9, 7);
    let data: Vec<f64> = (0..h * w).map(|_| rng.next_f64()).collect();
    let img = plane(h, w, |y, x| data[y * w + x]);
    // Counter-clockwise: rotated[y][x] = img[x][w-1-y].
    let rot = plane(w, h, |y, x| img.at(0, 0, x, w - 1 - y));
    let a = sobel(&img);
    let b = sobel(&rot);
    for y in 0..w {
        for x in 0..h {
            let (sy, sx) = (x, w - 1 - y);
            assert!((b.gx.at(0, 0, y, x).abs() - a.gy.at(0, 0, sy, sx).abs()).abs() < 1e-12);
            assert!((b.gy.at(0, 0, y, x).abs() - a.gx.at(0, 0, sy, sx).abs()).abs() < 1e-12);
        }
    }
}

#[test]
fn sobel_is_translation_equivariant_away_from_borders() {
    let mut rng = SplitMix64::new(8);
    let big: Vec<f64> = (0..20 * 20).map(|_| rng.next_f64()).collect();
    let a = plane(16, 16, |y, x| big[y * 20 + x]);
    let b = plane(16, 16, |y, x| big[(y + 3) * 20 + x + 2]);
    let (ga, gb) = (sobel(&a), sobel(&b));
    for y in 1..12 {
        for x in 1..13 {
            assert_eq!(ga.magnitude.at(0, 0, y + 3, x + 2), gb.magnitude.at(0, 0, y, x));
        }
    }
    let m = sobel_edges(&a, 0.0);
    assert!(!m.is_empty());
}

#[test]
fn land_step_outshines_every_ridge_centreline_pixel() {
    // A brightest-case front (peak 0.9) on the default ocean level next to a
    // land region set to 0.
    let (h, w) = (64, 64);
    let ocean = 0.3;
    for (i, chain) in [
        (4..60).map(|x| (20usize, x)).collect::<Vec<_>>(),
        (4..40).map(|t| (10 + t, 4 + t)).collect::<Vec<_>>(),
    ]
    .into_iter()
    .enumerate()
    {
        let ridge = render_ridges(h, w, std::slice::from_ref(&chain), &[0.9], 2.5);
        let land = Mask::from_fn(h, w, |y, x| x + y > 100);
        let img = plane(h, w, |y, x| {
            if land.get(y, x) {
                0.0
            } else {
                (ocean + ridge[y * w + x]).min(1.0)
            }
        });
        let g = sobel(&img);
        let boundary = land_boundary(&land);
        let weakest_land = boundary
            .iter_set()
            .map(|(y, x)| g.magnitude.at(0, 0, y, x))
            .filter(|&m| m > 0.0)
            .fold(f64::INFINITY, f64::min);
        let strongest_ridge = chain
            .iter()
            .map(|&(y, x)| g.magnitude.at(0, 0, y, x))
            .fold(0.0, f64::max);
        assert!(
            weakest_land > strongest_ridge,
            "fixture {i}: land {weakest_land} vs ridge {strongest_ridge}"
        );
    }
}
