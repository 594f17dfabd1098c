//! Deterministic serialization and exports.
//!
//! Densities persist as a small line-oriented text document: a version
//! header, the grid geometry, optional fit metadata, and one row per tile in
//! the fixed `(zoom, y, x)` order. Weights are written as decimals with 17
//! significant digits, so parsing a saved document reproduces the density
//! bit for bit, and saving is byte-deterministic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::density::{FitMeta, SparseDensity};
use crate::error::{Error, Result};
use crate::grid::{Bounds, GridSpec, TileId, MAX_DEPTH};

const FORMAT_HEADER: &str = "tiledens density format";
const FORMAT_VERSION: u32 = 1;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a density as a canonical text document.
pub fn save(density: &SparseDensity) -> String {
    let spec = density.spec();
    let b = spec.bounds();
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_HEADER} {FORMAT_VERSION}");
    let _ = writeln!(out, "k {}", spec.k());
    let _ = writeln!(
        out,
        "bounds {} {} {} {}",
        fmt_f64(b.x_min),
        fmt_f64(b.x_max),
        fmt_f64(b.y_min),
        fmt_f64(b.y_max)
    );
    if let Some(meta) = density.meta() {
        let _ = writeln!(out, "alpha {}", fmt_f64(meta.alpha));
        let _ = writeln!(out, "delta {}", fmt_f64(meta.delta));
        let _ = writeln!(out, "lambda {}", fmt_f64(meta.lambda));
    }
    let _ = writeln!(out, "tiles {}", density.nnz());
    for (tile, &c) in density.coeffs() {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            tile.zoom(),
            tile.x(),
            tile.y(),
            fmt_f64(c)
        );
    }
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Lines<'a> {
        Lines {
            iter: text.lines().enumerate(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.iter.next() {
            Some((i, line)) => Ok((i + 1, line)),
            None => Err(Error::Parse {
                line: 0,
                message: format!("unexpected end of document, expected {what}"),
            }),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn keyed_value<'a>(line: &'a str, key: &str, lineno: usize) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| parse_err(lineno, format!("expected `{key} ...`, got `{line}`")))
}

fn parse_f64(token: &str, lineno: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| parse_err(lineno, format!("invalid number `{token}`")))
}

/// Parse a density document, validating geometry, tile order, and the
/// density invariants; any defect fails with the offending line.
pub fn load(text: &str) -> Result<SparseDensity> {
    let mut lines = Lines::new(text);

    let (n, header) = lines.next("header")?;
    let version = header
        .strip_prefix(FORMAT_HEADER)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| parse_err(n, format!("expected `{FORMAT_HEADER} <version>`")))?;
    let version: u32 = version
        .parse()
        .map_err(|_| parse_err(n, format!("invalid format version `{version}`")))?;
    if version != FORMAT_VERSION {
        return Err(parse_err(
            n,
            format!("unsupported format version {version}"),
        ));
    }

    let (n, line) = lines.next("grid depth")?;
    let k: u8 = keyed_value(line, "k", n)?
        .parse()
        .map_err(|_| parse_err(n, "invalid grid depth"))?;
    if k > MAX_DEPTH {
        return Err(parse_err(
            n,
            format!("grid depth {k} exceeds maximum {MAX_DEPTH}"),
        ));
    }

    let (n, line) = lines.next("bounds")?;
    let tokens: Vec<&str> = keyed_value(line, "bounds", n)?.split(' ').collect();
    if tokens.len() != 4 {
        return Err(parse_err(n, "bounds needs exactly 4 values"));
    }
    let bounds = Bounds::new(
        parse_f64(tokens[0], n)?,
        parse_f64(tokens[1], n)?,
        parse_f64(tokens[2], n)?,
        parse_f64(tokens[3], n)?,
    )
    .map_err(|e| parse_err(n, e.to_string()))?;
    let spec = GridSpec::new(k, bounds).map_err(|e| parse_err(n, e.to_string()))?;

    // optional fit metadata block
    let (n, mut line) = lines.next("tile count")?;
    let mut lineno = n;
    let meta = if line.starts_with("alpha ") {
        let alpha = parse_f64(keyed_value(line, "alpha", lineno)?, lineno)?;
        let (n, l) = lines.next("delta")?;
        let delta = parse_f64(keyed_value(l, "delta", n)?, n)?;
        let (n, l) = lines.next("lambda")?;
        let lambda = parse_f64(keyed_value(l, "lambda", n)?, n)?;
        let (n, l) = lines.next("tile count")?;
        line = l;
        lineno = n;
        Some(FitMeta {
            alpha,
            delta,
            lambda,
        })
    } else {
        None
    };

    let count: usize = keyed_value(line, "tiles", lineno)?
        .parse()
        .map_err(|_| parse_err(lineno, "invalid tile count"))?;

    let mut coeffs: BTreeMap<TileId, f64> = BTreeMap::new();
    let mut prev: Option<TileId> = None;
    for _ in 0..count {
        let (n, line) = lines.next("tile row")?;
        let tokens: Vec<&str> = line.split(' ').collect();
        if tokens.len() != 4 {
            return Err(parse_err(n, "tile row needs `zoom x y weight`"));
        }
        let zoom: u8 = tokens[0]
            .parse()
            .map_err(|_| parse_err(n, "invalid zoom"))?;
        let x: u32 = tokens[1]
            .parse()
            .map_err(|_| parse_err(n, "invalid tile x"))?;
        let y: u32 = tokens[2]
            .parse()
            .map_err(|_| parse_err(n, "invalid tile y"))?;
        let weight = parse_f64(tokens[3], n)?;
        let tile = TileId::new(zoom, x, y).map_err(|e| parse_err(n, e.to_string()))?;
        if zoom > k {
            return Err(parse_err(
                n,
                format!("tile zoom {zoom} exceeds grid depth {k}"),
            ));
        }
        if !weight.is_finite() || weight == 0.0 {
            return Err(parse_err(
                n,
                format!("weight must be finite and nonzero, got {weight}"),
            ));
        }
        if let Some(p) = prev {
            if tile <= p {
                return Err(parse_err(
                    n,
                    format!("tile {tile} out of canonical order (duplicate or unsorted)"),
                ));
            }
        }
        prev = Some(tile);
        coeffs.insert(tile, weight);
    }
    if let Some((n, extra)) = lines.iter.next() {
        if !extra.is_empty() {
            return Err(parse_err(
                n + 1,
                format!("unexpected trailing content `{extra}`"),
            ));
        }
    }
    SparseDensity::new(spec, coeffs, meta)
}

pub fn write_density(path: &Path, density: &SparseDensity) -> Result<()> {
    std::fs::write(path, save(density))?;
    Ok(())
}

pub fn read_density(path: &Path) -> Result<SparseDensity> {
    load(&std::fs::read_to_string(path)?)
}

/// Dense cell export, one `col,row,value` line per grid cell.
pub fn export_grid(density: &SparseDensity) -> String {
    let spec = density.spec();
    let values = density.eval_grid();
    let mut out = String::from("col,row,value\n");
    for (i, v) in values.iter().enumerate() {
        let (col, row) = spec.cell_at(i);
        let _ = writeln!(out, "{col},{row},{v}");
    }
    out
}

/// GeoJSON feature collection with one polygon per nonzero tile, carrying
/// the tile weight and its per-cell contribution.
pub fn export_tiles(density: &SparseDensity) -> String {
    let spec = density.spec();
    let features: Vec<serde_json::Value> = density
        .coeffs()
        .iter()
        .map(|(tile, &weight)| {
            let b = spec.tile_bounds(tile).unwrap();
            let cells = tile.cell_count(spec.k()).unwrap() as f64;
            serde_json::json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[
                        [b.x_min, b.y_min],
                        [b.x_max, b.y_min],
                        [b.x_max, b.y_max],
                        [b.x_min, b.y_max],
                        [b.x_min, b.y_min],
                    ]],
                },
                "properties": {
                    "zoom": tile.zoom(),
                    "x": tile.x(),
                    "y": tile.y(),
                    "weight": weight,
                    "cell_value": weight / cells,
                },
            })
        })
        .collect();
    serde_json::json!({
        "type": "FeatureCollection",
        "features": features,
    })
    .to_string()
}

/// Read `x,y` points from CSV text with a header. The header must name an
/// `x,y` or `lon,lat` column pair (any case); extra columns are ignored.
/// Any malformed row fails with its line number.
pub fn read_points_csv<R: std::io::Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(&e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let (xi, yi) = match (find("x"), find("y"), find("lon"), find("lat")) {
        (Some(x), Some(y), _, _) => (x, y),
        (_, _, Some(lon), Some(lat)) => (lon, lat),
        _ => {
            return Err(parse_err(
                1,
                format!(
                    "header must name `x,y` or `lon,lat` columns, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            ))
        }
    };

    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse = |idx: usize| -> Result<f64> {
            let field = record
                .get(idx)
                .ok_or_else(|| parse_err(line, "row is missing a coordinate column"))?;
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("invalid coordinate `{field}`")))
        };
        points.push((parse(xi)?, parse(yi)?));
    }
    Ok(points)
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(line, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn unit_spec(k: u8) -> GridSpec {
        GridSpec::new(k, Bounds::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap()
    }

    fn density(k: u8, entries: &[((u8, u32, u32), f64)], meta: Option<FitMeta>) -> SparseDensity {
        let coeffs = entries
            .iter()
            .map(|&((z, x, y), c)| (TileId::new(z, x, y).unwrap(), c))
            .collect();
        SparseDensity::new(unit_spec(k), coeffs, meta).unwrap()
    }

    #[test]
    fn one_tile_document() {
        let d = density(2, &[((0, 0, 0), 1.0)], None);
        let text = save(&d);
        let tile_rows: Vec<&str> = text
            .lines()
            .skip_while(|l| !l.starts_with("tiles"))
            .skip(1)
            .collect();
        assert_eq!(tile_rows, vec!["0 0 0 1.0000000000000000e0"]);
        let back = load(&text).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn round_trip_is_exact_and_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let k = rng.gen_range(1..=5u8);
            let mut coeffs = BTreeMap::new();
            for _ in 0..rng.gen_range(1..20) {
                let zoom = rng.gen_range(0..=k);
                let side = 1u32 << zoom;
                let t = TileId::new(zoom, rng.gen_range(0..side), rng.gen_range(0..side)).unwrap();
                coeffs.insert(t, rng.gen_range(0.01..1.0));
            }
            let total: f64 = coeffs.values().sum();
            coeffs.values_mut().for_each(|v| *v /= total);
            let meta = if rng.gen_bool(0.5) {
                Some(FitMeta {
                    alpha: rng.gen_range(0.0..1.0),
                    delta: 0.001,
                    lambda: rng.gen::<f64>(),
                })
            } else {
                None
            };
            let d = SparseDensity::new(unit_spec(k), coeffs, meta).unwrap();
            let text = save(&d);
            let back = load(&text).unwrap();
            assert_eq!(back, d, "round trip changed the density");
            assert_eq!(save(&back), text, "second save differs");
        }
    }

    #[test]
    fn load_rejects_defects() {
        let d = density(
            2,
            &[((0, 0, 0), 0.5), ((1, 1, 0), 0.25), ((2, 3, 3), 0.25)],
            Some(FitMeta {
                alpha: 0.5,
                delta: 0.001,
                lambda: 0.1,
            }),
        );
        let text = save(&d);

        // duplicate tile
        let dup = text.replace("1 1 0 ", "0 0 0 ");
        assert!(matches!(load(&dup), Err(Error::Parse { .. })));

        // shuffled order
        let mut lines: Vec<&str> = text.lines().collect();
        let len = lines.len();
        lines.swap(len - 1, len - 2);
        let shuffled = lines.join("\n");
        assert!(matches!(load(&shuffled), Err(Error::Parse { .. })));

        // out-of-range tile for the declared depth
        let deep = text.replace("2 3 3 ", "5 3 3 ");
        assert!(matches!(load(&deep), Err(Error::Parse { .. })));

        // unsupported version
        let bad = text.replace("format 1", "format 2");
        assert!(matches!(load(&bad), Err(Error::Parse { line: 1, .. })));

        // weights that do not sum to one fail loudly
        let off = text.replace("5.0000000000000000e-1", "6.0000000000000000e-1");
        assert!(load(&off).is_err());
    }

    #[test]
    fn parse_error_carries_line_number() {
        let d = density(1, &[((0, 0, 0), 0.5), ((1, 0, 1), 0.5)], None);
        let text = save(&d);
        let broken = text.replace("1 0 1", "1 0 oops");
        match load(&broken) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn grid_export_sums_to_one() {
        let d = density(1, &[((0, 0, 0), 1.0)], None);
        let text = export_grid(&d);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("col,row,value"));
        let values: Vec<f64> = lines
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(values, vec![0.25; 4]);
    }

    #[test]
    fn tile_export_geometry() {
        let spec = GridSpec::new(3, Bounds::new(0.0, 8.0, 0.0, 8.0).unwrap()).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(TileId::new(1, 1, 0).unwrap(), 1.0);
        let d = SparseDensity::new(spec, coeffs, None).unwrap();
        let geojson: serde_json::Value = serde_json::from_str(&export_tiles(&d)).unwrap();
        let features = geojson["features"].as_array().unwrap();
        assert_eq!(features.len(), d.nnz());
        let ring = &features[0]["geometry"]["coordinates"][0];
        assert_eq!(ring[0], serde_json::json!([4.0, 0.0]));
        assert_eq!(ring[2], serde_json::json!([8.0, 4.0]));
        assert_eq!(features[0]["properties"]["weight"], serde_json::json!(1.0));
        assert_eq!(
            features[0]["properties"]["cell_value"],
            serde_json::json!(1.0 / 16.0)
        );
    }

    #[test]
    fn points_csv_happy_path_and_errors() {
        let good = "x,y\n0.5,0.25\n1.5,2.5\n";
        assert_eq!(
            read_points_csv(good.as_bytes()).unwrap(),
            vec![(0.5, 0.25), (1.5, 2.5)]
        );

        let lonlat = "name,LON,Lat\na,1.0,2.0\n";
        assert_eq!(
            read_points_csv(lonlat.as_bytes()).unwrap(),
            vec![(1.0, 2.0)]
        );

        let bad_header = "a,b\n1,2\n";
        assert!(matches!(
            read_points_csv(bad_header.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));

        let bad_row = "x,y\n0.5,0.25\n0.5,north\n";
        match read_points_csv(bad_row.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
