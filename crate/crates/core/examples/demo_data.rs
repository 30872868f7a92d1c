//! Writes a synthetic monthly panel and reserve file for the demo
//! institution.
//!
//! `cargo run --example demo_data -- <out-dir> [persons-per-age] [first-year] [months] [seed]`

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use popchain::ingestion::YearMonth;
use popchain::synthetic::{generate, write_records_csv, write_reserve_csv, SyntheticTruth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().ok_or("usage: demo_data <out-dir> [persons] [first-year] [months] [seed]")?);
    let persons: usize = args.get(1).map_or(Ok(10), |s| s.parse())?;
    let first_year: i32 = args.get(2).map_or(Ok(2006), |s| s.parse())?;
    let months: usize = args.get(3).map_or(Ok(144), |s| s.parse())?;
    let seed: u64 = args.get(4).map_or(Ok(1), |s| s.parse())?;

    let truth = SyntheticTruth::demo(persons);
    let panel = generate(&truth, YearMonth::new(first_year, 1), months, 60, seed)?;
    std::fs::create_dir_all(&out)?;
    write_records_csv(BufWriter::new(File::create(out.join("records.csv"))?), &panel.records, &truth.config)?;
    write_reserve_csv(BufWriter::new(File::create(out.join("reserve.csv"))?), &panel.reserve, &truth.config)?;
    println!("{} records for {} people per age", panel.records.len(), persons);
    Ok(())
}
