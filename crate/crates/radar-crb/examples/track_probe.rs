use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2};
use radar_crb::config;
use radar_crb::dynamics::{self, ModelKind, MotionModel};
use radar_crb::geometry;
use radar_crb::rng::{stream, StreamKind};
use radar_crb::sensing;
use radar_crb::tracking::{imm_step, ChannelFilter, ModelBank};

fn main() {
    let cfg = config::parse_scenario(config::bundled("scenario1").unwrap()).unwrap();
    let mut scenario = cfg.build().unwrap();
    // probe: azimuth base variance as deg^2 -> rad^2
    scenario.sigma0[(1, 1)] = 0.002 * (std::f64::consts::PI / 180.0).powi(2);
    let plan = &scenario.plans[0];
    let mut truth_rng = stream(7, 0, StreamKind::Truth, 0);
    let truth = dynamics::generate_truth(plan, 1.0, 100, &mut truth_rng).unwrap();
    let bounds = geometry::sinr_bounds(&scenario.layout, &scenario.scatter, &truth, 0).unwrap();
    println!("bounds: {bounds:?}");

    let bank = ModelBank::new(
        vec![MotionModel::new(ModelKind::Ncv, 1.0).unwrap()],
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DVector::from_vec(vec![1.0]),
        dynamics::process_noise_cov(0.1, 1.0),
    )
    .unwrap();
    let x0 = plan.initial_state.as_vector();
    let mut filter = ChannelFilter::init((0, 0), 0, x0, Matrix4::from_diagonal_element(20.0), &bank);
    let mut obs_rng = stream(7, 0, StreamKind::Observation, 1);
    for t in 1..40usize {
        let pos = truth[t - 1].position();
        let s = geometry::true_sinr(&scenario.layout, &scenario.scatter, pos, 0, 0, 0).unwrap();
        let lam = geometry::lambda_coeff(s, bounds.0, bounds.1).unwrap();
        let cov = geometry::measurement_covariance(lam, &scenario.sigma0).unwrap();
        let ideal = sensing::ideal_measurement(&scenario.layout, pos, 0, 0).unwrap();
        let (r, phi) = sensing::noisy_measurement(ideal, &cov, &mut obs_rng);
        let z = Vector2::new(r, phi);
        let rmat = Matrix2::new(cov[(0, 0)], 0.0, 0.0, cov[(1, 1)]);
        filter = imm_step(&filter, &bank, &z, &rmat, &scenario.layout, 0, 0).unwrap();
        let (x, p) = filter.combined();
        let ex = x[0] - truth[t - 1].x;
        let ey = x[2] - truth[t - 1].y;
        if t <= 10 || t % 10 == 0 {
            println!(
                "t={t:3} err=({ex:9.2},{ey:9.2}) |e|={:8.2}  z=({r:11.2},{phi:8.5}) ideal=({:11.2},{:8.5}) lam={lam:.3} Ppos=({:.2},{:.2})",
                (ex * ex + ey * ey).sqrt(),
                ideal.0,
                ideal.1,
                p[(0, 0)],
                p[(2, 2)]
            );
        }
    }
}
