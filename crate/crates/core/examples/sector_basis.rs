//! Fixed-magnetization bases and their index maps.
use gibbsforge::hilbert::{binomial, LatticeSpec, SectorBasis, SiteSubset, SubsetRole};

fn main() -> gibbsforge::Result<()> {
    for (l, p) in [(24, 3), (30, 3)] {
        let b = SectorBasis::sector(LatticeSpec::new(l, p)?)?;
        println!("{}: dim {} (C({l},{p}) = {:?})", b.id(), b.dim(), binomial(l, p));
    }
    let b = SectorBasis::sector(LatticeSpec::new(6, 2)?)?;
    for i in 0..4 {
        let m = b.state(i);
        println!("index {i} -> {m:06b} -> {:?}", b.index_of(m));
    }
    let t = SiteSubset::tail(3, SubsetRole::Test, 6)?;
    println!("test subset {:?}, mask {:06b}", t.sites(), t.mask());
    Ok(())
}
