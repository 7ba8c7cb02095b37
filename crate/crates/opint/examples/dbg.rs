use opint::measure::*;
use opint::C64;
fn main() {
    let z: f64 = (1..200_000).map(|n| 1.0 / (n as f64).powi(3)).sum();
    let mu = AtomicMeasure::sequence(move |n| Atom::real(n as f64, 1.0 / ((n as f64).powi(3) * z)));
    let m2 = AtomicMeasure::linear_combination(vec![(C64::new(1.0,0.0), mu)]);
    let v = integrate(|x| C64::new(x*x, 0.0), &m2.total_variation(), &SeriesPolicy::default()).unwrap();
    println!("status {:?} value {} fit {:?}", v.status, v.value, v.log_fit);
    for r in &v.evidence { println!("h {} p {}", r.horizon, r.partial_real); }
}
