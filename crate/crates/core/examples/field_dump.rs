//! Writes a level set and its pressure as CAGG-FIELD v1 dumps and reads them
//! back.
//!
//!     cargo run --release --example field_dump -- /tmp/square

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use cagg::field::{read_field, write_field, GridSpec};
use cagg::heleshaw::{solve_pressure, LevelSet};
use cagg::shapes::Shape;

fn main() -> cagg::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "field_dump".into()));
    std::fs::create_dir_all(&dir)?;
    let g = GridSpec::centered(64, 1.0 / 16.0, (0.0, 0.0))?;
    let ls = LevelSet::from_shape(g, &Shape::square((0.0, 0.0), 1.5))?;
    let p = solve_pressure(&ls)?.p;
    for (name, f) in [("levelset", ls.phi()), ("pressure", &p)] {
        let path = dir.join(format!("{name}.field"));
        write_field(BufWriter::new(File::create(&path)?), f)?;
        let back = read_field(BufReader::new(File::open(&path)?))?;
        println!("{} round trip exact: {}", path.display(), &back == f);
    }
    Ok(())
}
