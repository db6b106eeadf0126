//! CSV reading and writing for city datasets.
//!
//! Required files are `poi.csv`, `trajectories.csv` and `distances.csv`;
//! `labels.csv`, `series.csv`, `communities.csv` and `centroids.csv` are
//! optional. Floats are written with the shortest representation that
//! parses back to the same bits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::types::{
    Dataset, DistanceMatrix, LabelSeries, PoiMatrix, RegionSet, TrajectorySet, Trip,
    SYMMETRY_TOL,
};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// Locations of the files making up one dataset.
#[derive(Clone, Debug)]
pub struct DatasetPaths {
    pub poi: PathBuf,
    pub trajectories: PathBuf,
    pub distances: PathBuf,
    pub labels: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub communities: Option<PathBuf>,
    pub centroids: Option<PathBuf>,
}

impl DatasetPaths {
    /// Standard file names inside `dir`; optional files are used if present.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        DatasetPaths {
            poi: dir.join("poi.csv"),
            trajectories: dir.join("trajectories.csv"),
            distances: dir.join("distances.csv"),
            labels: opt("labels.csv"),
            series: opt("series.csv"),
            communities: opt("communities.csv"),
            centroids: opt("centroids.csv"),
        }
    }
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let header = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Table {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header.len() < expected.len()
            || self.header.iter().zip(expected).any(|(h, e)| h != e)
        {
            return Err(self.err(1, 1, format!("expected header `{}`", expected.join(","))));
        }
        Ok(())
    }

    fn err(&self, line: u64, column: usize, message: String) -> Error {
        Error::Parse {
            file: self.path.clone(),
            line,
            column,
            message,
        }
    }

    fn float(&self, line: u64, row: &[String], col: usize) -> Result<f64> {
        let cell = row.get(col).ok_or_else(|| self.err(line, col + 1, "missing field".into()))?;
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(line, col + 1, format!("`{cell}` is not a finite number"))),
        }
    }

    fn index(&self, line: u64, row: &[String], col: usize) -> Result<usize> {
        let cell = row.get(col).ok_or_else(|| self.err(line, col + 1, "missing field".into()))?;
        cell.parse::<usize>()
            .map_err(|_| self.err(line, col + 1, format!("`{cell}` is not a non-negative integer")))
    }

    fn check_width(&self, line: u64, row: &[String]) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(self.err(line, row.len().min(self.header.len()) + 1, format!("expected {} fields, found {}", self.header.len(), row.len())));
        }
        Ok(())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            file: path.to_path_buf(),
            line,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reads rows keyed by `region_id` in column 0, requiring each id in
/// `0..count` exactly once. Returns the rows ordered by id.
fn by_region(table: &Table, count: usize) -> Result<Vec<(u64, &Vec<String>)>> {
    let mut slots: Vec<Option<(u64, &Vec<String>)>> = vec![None; count];
    for (line, row) in &table.rows {
        table.check_width(*line, row)?;
        let id = table.index(*line, row, 0)?;
        if id >= count {
            return Err(Error::Validation(format!("{}:{line}: region {id} out of range 0..{count}", table.path.display())));
        }
        if slots[id].is_some() {
            return Err(Error::Validation(format!("{}:{line}: region {id} listed twice", table.path.display())));
        }
        slots[id] = Some((*line, row));
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(id, s)| s.ok_or_else(|| Error::Validation(format!("{}: region {id} missing", table.path.display()))))
        .collect()
}

fn read_poi(path: &Path) -> Result<PoiMatrix> {
    let table = Table::read(path)?;
    table.expect_header(&["region_id"])?;
    let categories: Vec<String> = table.header[1..].to_vec();
    let j = table.rows.len();
    let ordered = by_region(&table, j)?;
    let c = categories.len();
    let mut counts = Tensor::zeros(j, c);
    for (id, (line, row)) in ordered.iter().enumerate() {
        for k in 0..c {
            let v = table.float(*line, row, k + 1)?;
            if v < 0.0 {
                return Err(table.err(*line, k + 2, format!("negative POI count {v}")));
            }
            counts.set(id, k, v);
        }
    }
    PoiMatrix::new(counts, categories)
}

fn read_trajectories(path: &Path, regions: usize) -> Result<TrajectorySet> {
    let table = Table::read(path)?;
    table.expect_header(&["src_region", "dst_region", "src_slot", "dst_slot"])?;
    let mut trips = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        table.check_width(*line, row)?;
        trips.push(Trip {
            src_region: table.index(*line, row, 0)?,
            dst_region: table.index(*line, row, 1)?,
            src_slot: table.index(*line, row, 2)?,
            dst_slot: table.index(*line, row, 3)?,
        });
    }
    let slots = trips.iter().map(|t| t.dst_slot.max(t.src_slot) + 1).max().unwrap_or(1);
    TrajectorySet::new(trips, regions, slots)
}

fn read_distances(path: &Path, regions: usize) -> Result<DistanceMatrix> {
    let table = Table::read(path)?;
    table.expect_header(&["region_a", "region_b", "distance"])?;
    let mut dist: Vec<Option<f64>> = vec![None; regions * regions];
    for (line, row) in &table.rows {
        table.check_width(*line, row)?;
        let a = table.index(*line, row, 0)?;
        let b = table.index(*line, row, 1)?;
        let d = table.float(*line, row, 2)?;
        if a >= regions || b >= regions {
            return Err(Error::Validation(format!("{}:{line}: region out of range 0..{regions}", path.display())));
        }
        if d < 0.0 {
            return Err(table.err(*line, 3, format!("negative distance {d}")));
        }
        for idx in [a * regions + b, b * regions + a] {
            match dist[idx] {
                Some(prev) if (prev - d).abs() > SYMMETRY_TOL => {
                    return Err(Error::Validation(format!(
                        "{}:{line}: distance ({a},{b}) = {d} conflicts with {prev}",
                        path.display()
                    )));
                }
                Some(_) => {}
                None => dist[idx] = Some(d),
            }
        }
    }
    let mut m = Tensor::zeros(regions, regions);
    for i in 0..regions {
        for j in 0..regions {
            match dist[i * regions + j] {
                Some(d) => m.set(i, j, d),
                None if i == j => {}
                None => {
                    return Err(Error::Validation(format!("{}: no distance for pair ({i},{j})", path.display())));
                }
            }
        }
    }
    DistanceMatrix::new(m)
}

fn read_labels(path: &Path, regions: usize) -> Result<Vec<f64>> {
    let table = Table::read(path)?;
    table.expect_header(&["region_id", "target"])?;
    by_region(&table, regions)?
        .into_iter()
        .map(|(line, row)| table.float(line, row, 1))
        .collect()
}

fn read_series(path: &Path, regions: usize) -> Result<Vec<Vec<f64>>> {
    let table = Table::read(path)?;
    table.expect_header(&["region_id", "slot", "value"])?;
    let mut series: Vec<Vec<Option<f64>>> = vec![Vec::new(); regions];
    for (line, row) in &table.rows {
        table.check_width(*line, row)?;
        let id = table.index(*line, row, 0)?;
        let slot = table.index(*line, row, 1)?;
        let v = table.float(*line, row, 2)?;
        if id >= regions {
            return Err(Error::Validation(format!("{}:{line}: region {id} out of range", path.display())));
        }
        let s = &mut series[id];
        if s.len() <= slot {
            s.resize(slot + 1, None);
        }
        s[slot] = Some(v);
    }
    series
        .into_iter()
        .enumerate()
        .map(|(id, s)| {
            s.into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Validation(format!("{}: region {id} has gaps", path.display())))
        })
        .collect()
}

fn read_communities(path: &Path, regions: usize) -> Result<Vec<usize>> {
    let table = Table::read(path)?;
    table.expect_header(&["region_id", "community"])?;
    by_region(&table, regions)?
        .into_iter()
        .map(|(line, row)| table.index(line, row, 1))
        .collect()
}

fn read_centroids(path: &Path, regions: usize) -> Result<Vec<(f64, f64)>> {
    let table = Table::read(path)?;
    table.expect_header(&["region_id", "x", "y"])?;
    by_region(&table, regions)?
        .into_iter()
        .map(|(line, row)| Ok((table.float(line, row, 1)?, table.float(line, row, 2)?)))
        .collect()
}

/// Loads and validates a dataset.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let poi = read_poi(&paths.poi)?;
    let j = poi.regions();
    let mut regions = RegionSet::new(j)?;
    let trajectories = read_trajectories(&paths.trajectories, j)?;
    let distances = read_distances(&paths.distances, j)?;
    let labels = match &paths.labels {
        Some(p) => {
            let targets = read_labels(p, j)?;
            let series = paths.series.as_deref().map(|s| read_series(s, j)).transpose()?;
            Some(LabelSeries { targets, series })
        }
        None => None,
    };
    let communities = paths.communities.as_deref().map(|p| read_communities(p, j)).transpose()?;
    regions.centroids = paths.centroids.as_deref().map(|p| read_centroids(p, j)).transpose()?;
    let ds = Dataset {
        regions,
        poi,
        trajectories,
        distances,
        labels,
        communities,
    };
    ds.validate()?;
    Ok(ds)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `ds` into `dir` using the standard file names.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<DatasetPaths> {
    use std::fmt::Write as _;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let j = ds.num_regions();

    let mut s = String::from("region_id");
    for c in ds.poi.categories() {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for r in 0..j {
        write!(s, "{r}").unwrap();
        for v in ds.poi.counts().row(r) {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    write_file(&dir.join("poi.csv"), &s)?;

    let mut s = String::from("src_region,dst_region,src_slot,dst_slot\n");
    for t in ds.trajectories.trips() {
        writeln!(s, "{},{},{},{}", t.src_region, t.dst_region, t.src_slot, t.dst_slot).unwrap();
    }
    write_file(&dir.join("trajectories.csv"), &s)?;

    let mut s = String::from("region_a,region_b,distance\n");
    for a in 0..j {
        for b in a + 1..j {
            writeln!(s, "{a},{b},{}", ds.distances.get(a, b)).unwrap();
        }
    }
    write_file(&dir.join("distances.csv"), &s)?;

    if let Some(labels) = &ds.labels {
        let mut s = String::from("region_id,target\n");
        for (r, v) in labels.targets.iter().enumerate() {
            writeln!(s, "{r},{v}").unwrap();
        }
        write_file(&dir.join("labels.csv"), &s)?;
        if let Some(series) = &labels.series {
            let mut s = String::from("region_id,slot,value\n");
            for (r, row) in series.iter().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    writeln!(s, "{r},{t},{v}").unwrap();
                }
            }
            write_file(&dir.join("series.csv"), &s)?;
        }
    }
    if let Some(c) = &ds.communities {
        let mut s = String::from("region_id,community\n");
        for (r, v) in c.iter().enumerate() {
            writeln!(s, "{r},{v}").unwrap();
        }
        write_file(&dir.join("communities.csv"), &s)?;
    }
    if let Some(c) = &ds.regions.centroids {
        let mut s = String::from("region_id,x,y\n");
        for (r, (x, y)) in c.iter().enumerate() {
            writeln!(s, "{r},{x},{y}").unwrap();
        }
        write_file(&dir.join("centroids.csv"), &s)?;
    }
    Ok(DatasetPaths::in_dir(dir))
}
