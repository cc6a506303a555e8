//! Train the car-following policy with SPIL and print progress.
//!
//! ```text
//! cargo run --release -p spil-core --example car_following -- 200
//! ```

use spil_core::chance::SurrogateConfig;
use spil_core::envmodels::CarFollowing;
use spil_core::multiplier::{MultiplierConfig, Separation};
use spil_core::trainer::{Trainer, TrainerConfig};

fn main() -> Result<(), spil_core::Error> {
    let iters: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("iteration count"))
        .unwrap_or(100);
    let model = CarFollowing::new();
    let config = TrainerConfig {
        max_iters: iters,
        ..TrainerConfig::default()
    };
    let multiplier = MultiplierConfig::spil(15.0, 0.6, 0.1, Separation::CAR)?;
    let mut trainer = Trainer::new(&model, config, multiplier, SurrogateConfig::CAR)?;
    println!("iter        J     p_s  lambda       I  |grad J|  |grad Phi|");
    for _ in 0..iters {
        let (r, converged) = trainer.step()?;
        if r.iteration % 10 == 0 || converged {
            println!(
                "{:4} {:8.3} {:7.4} {:7.3} {:7.4} {:9.4} {:10.2e}",
                r.iteration, r.j, r.p_s, r.lambda, r.integral, r.grad_j_norm, r.grad_phi_norm
            );
        }
        if converged {
            break;
        }
    }
    Ok(())
}
