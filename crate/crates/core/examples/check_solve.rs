use feedernet::demand::{DemandField, Marginal, Spread};
use feedernet::params::{agency_rates, ModelParams};
use feedernet::costmodel::Coordination;

fn main() {
    let p = ModelParams::default();
    let f = DemandField::product(
        1200.0, Marginal::new(0.0, Spread::StdDev(0.75)), Marginal::new(0.0, Spread::StdDev(0.5)),
        1200.0, Marginal::new(0.0, Spread::StdDev(0.75)), Marginal::new(0.0, Spread::StdDev(0.5)),
        3.0, 2.0, 0.3).unwrap();
    let rates = agency_rates(10, p.value_of_time).unwrap();
    let t0 = std::time::Instant::now();
    let r = feedernet::solver::solve_design(&p, &f, &rates, 10, Coordination::None, None).unwrap();
    println!("elapsed {:?} outer {} inner {}", t0.elapsed(), r.outer_iterations, r.inner_iterations);
    let c = r.costs;
    println!("C_A {:.3} C_W {:.3} C_T {:.3} AC {:.3} UC {:.3} GC {:.3}",
        c.access, c.wait, c.ride, c.agency, c.user, c.generalized);
    println!("expect (proto): C_A 89.62 C_W 252.71 C_T 124.04 AC 90.33 GC 556.70");
    let t0 = std::time::Instant::now();
    let (k, best) = feedernet::solver::optimize_vehicle_size(&p, &f, Coordination::None).unwrap();
    println!("K* {} GC {:.3} sweep elapsed {:?} (proto: K*=12, GC 555.57)", k, best.costs.generalized, t0.elapsed());
}
