//! Built-in models used throughout the tests and the CLI.

use crate::scm::DiscreteScm;

/// Degenerate identity chain: `W = 0`, `A = U_A ~ Bern(0.5)`, `Z = 0`,
/// `M = 0`, `Y = A`. Only the edge `A -> Y` carries influence, there is no
/// confounding, and every decomposition is known in closed form.
pub fn scm_t0() -> DiscreteScm {
    DiscreteScm {
        card_w: 1,
        card_a: 2,
        card_z: 1,
        card_m: 1,
        noise: [vec![1.0], vec![0.5, 0.5], vec![1.0], vec![1.0], vec![1.0]],
        f_w: vec![0],
        // a = u_a
        f_a: vec![0, 1],
        f_z: vec![0, 0],
        f_m: vec![0, 0],
        // y = a, laid out (m, z, a, w, u_y)
        f_y: vec![0.0, 1.0],
    }
}

/// Canonical binary test model with confounding and every path active:
///
/// ```text
/// W = U_W                      U_W ~ Bern(0.4)
/// A = W xor U_A                U_A ~ Bern(0.3)
/// Z = A xor U_Z                U_Z ~ Bern(0.1)
/// M = majority(Z,A,W) xor U_M  U_M ~ Bern(0.2)
/// Y = M + Z/2 + A/4 + W/10 + U_Y/5,  U_Y ~ Bern(0.15)
/// ```
pub fn scm_t1() -> DiscreteScm {
    let card = 2usize;
    let mut f_a = vec![0usize; 4];
    for w in 0..card {
        for u in 0..card {
            f_a[w * card + u] = w ^ u;
        }
    }
    let mut f_z = vec![0usize; 8];
    for a in 0..card {
        for w in 0..card {
            for u in 0..card {
                f_z[(a * card + w) * card + u] = a ^ u;
            }
        }
    }
    let mut f_m = vec![0usize; 16];
    for z in 0..card {
        for a in 0..card {
            for w in 0..card {
                for u in 0..card {
                    let maj = usize::from(z + a + w >= 2);
                    f_m[((z * card + a) * card + w) * card + u] = maj ^ u;
                }
            }
        }
    }
    let mut f_y = vec![0.0f64; 32];
    for m in 0..card {
        for z in 0..card {
            for a in 0..card {
                for w in 0..card {
                    for u in 0..card {
                        let idx = (((m * card + z) * card + a) * card + w) * card + u;
                        f_y[idx] = m as f64
                            + 0.5 * z as f64
                            + 0.25 * a as f64
                            + 0.1 * w as f64
                            + 0.2 * u as f64;
                    }
                }
            }
        }
    }
    DiscreteScm {
        card_w: card,
        card_a: card,
        card_z: card,
        card_m: card,
        noise: [
            vec![0.6, 0.4],
            vec![0.7, 0.3],
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.85, 0.15],
        ],
        f_w: vec![0, 1],
        f_a,
        f_z,
        f_m,
        f_y,
    }
}

/// Look up a built-in model by name.
pub fn by_name(name: &str) -> Option<DiscreteScm> {
    match name {
        "t0" => Some(scm_t0()),
        "t1" => Some(scm_t1()),
        _ => None,
    }
}
