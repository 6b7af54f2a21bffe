//! Per-slot energy terms and the closed-form bit minimizers.

use std::f64::consts::LN_2;

use wpmec::dual::{cubic_minimizer, offload_minimizer};
use wpmec::energy::{local_energy, offload_energy, server_energy};

fn main() -> wpmec::Result<()> {
    let (tau, bandwidth, sigma2, gain) = (0.1, 2e6, 1e-9, 1e-6);
    println!("local 1e5 bits      {:.4e} J", local_energy(1e-28, 1e3, 1e5, tau)?);
    println!("offload 4e5 bits    {:.4e} J", offload_energy(gain, 4e5, tau, bandwidth, sigma2)?);
    println!("server [1e5, 2e5]   {:.4e} J", server_energy(1e-28, 1e3, &[1e5, 2e5], tau)?);

    let coeff = 1e-28 * 1e9 / (tau * tau);
    println!("argmin coeff·L³ + μL at μ = −3e−7: {:.6e} bits", cubic_minimizer(coeff, -3e-7));
    let price = 4.0 * sigma2 * LN_2 / (bandwidth * gain);
    println!("offload minimizer at log argument 4: {:.6e} bits", offload_minimizer(1.0, price, gain, tau, bandwidth, sigma2));
    Ok(())
}
