//! SVG heatmaps of cell densities.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;

use anyhow::{bail, Context, Result};
use gridcopula::gof::posterior_mean_grid;
use gridcopula::mle::sample_copula_estimate;
use gridcopula::{Chain, CopulaFamily, ThetaGrid};

use crate::data::{cell_density, create, load_counts, write_cdf_surface, write_cells};
use crate::HeatmapArgs;

const SAMPLE_COPULA_M: usize = 5;
const FAMILY_M: usize = 128;
/// Densities at or above this value get the darkest colour.
pub const DENSITY_CAP: f64 = 3.0;
const SIZE: f64 = 512.0;

/// Yellow-orange-red ramp, light to dark.
const STOPS: [(u8, u8, u8); 5] = [
    (0xff, 0xff, 0xcc),
    (0xfe, 0xd9, 0x76),
    (0xfd, 0x8d, 0x3c),
    (0xe3, 0x1a, 0x1c),
    (0x80, 0x00, 0x26),
];

/// Hex colour for a density, linear between ramp stops over `[0, DENSITY_CAP]`.
pub fn colour(density: f64) -> String {
    let t = (density / DENSITY_CAP).clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

/// Renders the grid with `u` to the right and `v` upwards.
pub fn render_svg(grid: &ThetaGrid, title: &str) -> String {
    let m = grid.m();
    let side = SIZE / m as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SIZE} {SIZE}" width="{SIZE}" height="{SIZE}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    for j in 0..m {
        for k in 0..m {
            let d = cell_density(grid, j, k);
            let x = j as f64 * side;
            let y = SIZE - (k + 1) as f64 * side;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{side}" height="{side}" fill="{}" data-j="{}" data-k="{}" data-density="{d:?}"/>"#,
                colour(d),
                j + 1,
                k + 1,
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn source_grid(args: &HeatmapArgs) -> Result<(ThetaGrid, String)> {
    let given = [
        args.chain.is_some(),
        args.input.is_some(),
        args.reference.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if given > 1 {
        bail!("conflicting sources: give only one of --chain, --in and --reference");
    }
    if let Some(path) = &args.chain {
        if args.m.is_some() {
            bail!("--m does not apply to a chain, whose grid order is fixed");
        }
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let chain = Chain::read_csv(file)
            .with_context(|| format!("cannot read chain {}", path.display()))?;
        return Ok((
            posterior_mean_grid(&chain)?,
            format!("posterior mean, m = {}", chain.m),
        ));
    }
    if let Some(path) = &args.input {
        let m = args.m.unwrap_or(SAMPLE_COPULA_M);
        let ties = if args.lenient_ties {
            gridcopula::TieMode::Lenient
        } else {
            gridcopula::TieMode::Strict
        };
        let counts = load_counts(path, m, args.mode, ties)?;
        return Ok((
            sample_copula_estimate(&counts)?,
            format!("sample copula, m = {m}"),
        ));
    }
    if let Some(name) = &args.reference {
        let family = CopulaFamily::from_name(name, args.theta)?;
        let m = args.m.unwrap_or(FAMILY_M);
        return Ok((family.checkerboard(m)?, format!("{family}, m = {m}")));
    }
    bail!("no source: give one of --chain, --in or --reference")
}

pub fn run(args: &HeatmapArgs) -> Result<()> {
    if args.cdf_points == 0 {
        bail!("--cdf-points must be at least 1");
    }
    let (grid, title) = source_grid(args)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut w = create(&args.out.join("heatmap.svg"))?;
    w.write_all(render_svg(&grid, &title).as_bytes())?;
    w.flush()?;
    write_cells(&args.out.join("cells.csv"), &grid)?;
    write_cdf_surface(&args.out.join("cdf.csv"), &grid, args.cdf_points)?;
    println!("{title}: wrote {}", args.out.display());
    Ok(())
}
