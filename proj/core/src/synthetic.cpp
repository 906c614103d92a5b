#include "moca/dataio.hpp"

namespace moca {

TaskStream generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_tasks == 0 || spec.num_classes == 0 || spec.num_classes % spec.num_tasks != 0) {
        throw ConfigError("generate_synthetic: classes must be a positive multiple of tasks");
    }
    if (!(spec.sigma > 0.0)) throw ConfigError("generate_synthetic: sigma must be positive");
    if (spec.input_dim == 0) throw ConfigError("generate_synthetic: input_dim must be positive");

    RngStream root(spec.seed);
    RngStream mean_rng = root.split(0);
    RngStream sample_rng = root.split(1);

    std::vector<FeatureVector> means;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const UnitVector dir = sample_uniform_sphere(spec.input_dim, mean_rng);
        FeatureVector m(dir.values());
        for (auto& v : m) v *= spec.mean_radius;
        means.push_back(std::move(m));
    }

    TaskStream stream;
    stream.num_classes = spec.num_classes;
    stream.input_dim = spec.input_dim;
    const std::size_t per_task = spec.num_classes / spec.num_tasks;
    std::size_t train_id = 0, test_id = 0;
    for (std::size_t t = 0; t < spec.num_tasks; ++t) {
        Task task;
        for (std::size_t c = t * per_task; c < (t + 1) * per_task; ++c) task.classes.push_back(c);
        for (std::size_t c : task.classes) {
            auto draw = [&](std::size_t id) {
                Example ex;
                ex.input.resize(spec.input_dim);
                for (std::size_t i = 0; i < spec.input_dim; ++i) {
                    ex.input[i] = means[c][i] + spec.sigma * sample_rng.normal();
                }
                ex.label = c;
                ex.task = t;
                ex.id = id;
                return ex;
            };
            for (std::size_t i = 0; i < spec.train_per_class; ++i) task.train.push_back(draw(train_id++));
            for (std::size_t i = 0; i < spec.test_per_class; ++i) task.test.push_back(draw(test_id++));
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

}  // namespace moca
