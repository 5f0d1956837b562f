//! Named toric fixtures, all in anticanonical (Fano) normalisation except
//! where noted.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Vecd;
use crate::torus::{Facet, Polytope};

pub const NAMES: [&str; 5] = ["p1", "p2", "p1xp1", "blp2", "simplex3"];

pub fn describe(name: &str) -> &'static str {
    match name {
        "p1" => "P^1: [-1, 1]",
        "p2" => "P^2: x_i >= -1, x_1 + x_2 <= 1",
        "p1xp1" => "P^1 x P^1: [-1, 1]^2",
        "blp2" => "Bl_p P^2: P^2 with the corner (-1,-1) chopped by x_1 + x_2 >= -1",
        "simplex3" => "standard simplex x_i >= 0, x_1 + x_2 <= 3 (not Fano-normalised)",
        _ => "unknown",
    }
}

pub fn p1() -> Polytope {
    Polytope::interval(-1.0, 1.0).unwrap()
}

pub fn p2() -> Polytope {
    Polytope::new(
        2,
        alloc::vec![Facet::new(&[1.0, 0.0], 1.0), Facet::new(&[0.0, 1.0], 1.0), Facet::new(&[-1.0, -1.0], 1.0)],
    )
    .unwrap()
}

pub fn p1xp1() -> Polytope {
    Polytope::cube(&[-1.0, -1.0], &[1.0, 1.0]).unwrap()
}

pub fn blp2() -> Polytope {
    p2().chop_corners(&[(Vecd::from_slice(&[-1.0, -1.0]), 1.0)]).unwrap()
}

pub fn simplex3() -> Polytope {
    Polytope::simplex(2, 3.0).unwrap()
}

pub fn by_name(name: &str) -> Result<Polytope> {
    match name {
        "p1" => Ok(p1()),
        "p2" => Ok(p2()),
        "p1xp1" => Ok(p1xp1()),
        "blp2" => Ok(blp2()),
        "simplex3" => Ok(simplex3()),
        other => Err(Error::Invalid(alloc::format!("unknown fixture '{other}'"))),
    }
}

pub fn all() -> Vec<(String, Polytope)> {
    NAMES.iter().map(|n| (String::from(*n), by_name(n).unwrap())).collect()
}
