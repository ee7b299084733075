//! Calibrate every fuel-economy bin on the FTP-75 cycle and show that each
//! bin reproduces its target economy on the cycle.

use streetfuel::fuel::{calibrate, CalibrationOptions, DriveCycle, Fleet};
use streetfuel::profiles::ProfileFeatures;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cycle = DriveCycle::ftp75();
    let opts = CalibrationOptions::default();
    let f = cycle.features(opts.idle_threshold)?;
    println!(
        "{}: {:.0} s, {:.2} km, idle {:.0} s, ∫|a|dx {:.0} m²/s²",
        cycle.name,
        cycle.duration(),
        cycle.distance_km(),
        f.t_idle,
        f.accel_integral
    );

    let mut fleet = Fleet::with_distribution(&[(6, 0.4), (7, 0.4), (11, 0.2)])?;
    let scales = calibrate(&mut fleet, &cycle, &opts)?;
    println!("{:>3} {:>20} {:>7} {:>7}  {:>10} {:>10} {:>10} {:>10}", "bin", "label", "target", "cycle", "k_idle", "k_move", "k_accel", "k_km");
    for (bin, s) in fleet.bins.iter().zip(&scales) {
        let k = bin.k()?;
        println!(
            "{:>3} {:>20} {:>7.1} {:>7.3}  {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}  (scale {s:.3e})",
            bin.id,
            bin.label,
            bin.target_mpg,
            cycle.recreated_mpg(bin, &f)?,
            k[0],
            k[1],
            k[2],
            k[3]
        );
    }

    // Same distance and moving time, with and without the stop-and-go.
    let city = ProfileFeatures { t_idle: 60.0, t_move: 240.0, accel_integral: 900.0, length: 2.0 };
    let flat = ProfileFeatures::constant_speed(240.0, 2.0);
    println!(
        "fleet-weighted litres for 2 km: {:.4} stop-and-go vs {:.4} steady",
        fleet.weighted_fc(&city)?,
        fleet.weighted_fc(&flat)?
    );
    Ok(())
}
