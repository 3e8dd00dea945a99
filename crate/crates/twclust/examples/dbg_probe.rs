use std::time::Instant;
use twclust::*;

fn main() {
    let spec = ScenarioSpec::standard(1).unwrap();
    let methods = [Method::Ch, Method::Kl, Method::Hartigan, Method::Silhouette, Method::Jump, Method::Ddse, Method::Djump];
    for rep in 0..3u64 {
        let ds = generate_scenario(&spec, 1000 + rep).unwrap();
        let mut options = SelectionOptions::default();
        options.cluster.seed = 500 + rep;
        let t0 = Instant::now();
        let grid = SelectionGrid::compute(&ds, &options, &methods).unwrap();
        let dt = t0.elapsed();
        print!("rep {rep} (grid {dt:?}): ");
        for m in methods {
            match grid.trace(m) {
                Ok(tr) => print!("{}={} (a={:?}) ", m, tr.k_opt, tr.alpha_opt),
                Err(e) => print!("{}=ERR({e}) ", m),
            }
        }
        println!();
        // wcs profile at alpha=0.5 for diagnosis
        let wcs = grid.wcs_table();
        let slot = wcs.alphas().iter().position(|a| *a == Some(0.5)).unwrap();
        let row: Vec<String> = (1..=9).map(|k| format!("{:.2}", wcs.get(slot, k).unwrap())).collect();
        println!("   wcs(a=0.5) k=1..9: {}", row.join(" "));
    }
}
