#include "dmt/cli/profile.hpp"

#include <sstream>

namespace dmt::cli {

Profile Profile::desk() {
  Profile p;
  p.name = "desk";
  p.model = model::ModelConfig::desk();
  return p;
}

Profile Profile::paper() {
  Profile p;
  p.name = "paper";
  p.model = model::ModelConfig::paper();
  return p;
}

Profile Profile::named(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw UsageError("unknown profile '" + name + "' (expected desk or paper)");
}

void Profile::apply(const Config& config) {
  for (const auto& section : config.sections) {
    SectionReader r(section, config.source);
    if (section.name == "model") {
      auto& m = model;
      try {
        m.fusion_mode = fusion::parse_fusion_mode(r.text("fusion_mode", fusion::fusion_mode_name(m.fusion_mode)));
      } catch (const ValueError& e) {
        r.fail("fusion_mode", e.what());
      }
      m.cmim.layers = r.count("cma_layers", m.cmim.layers);
      m.cmim.reencode_each_layer = r.flag("reencode_each_layer", m.cmim.reencode_each_layer);
      m.cmim.attention.use_positional_encoding =
          r.flag("positional_encoding", m.cmim.attention.use_positional_encoding);
      m.cmim.attention.encode_values = r.flag("encode_values", m.cmim.attention.encode_values);
      m.cls_channels = r.count("cls_channels", m.cls_channels);
      m.lambda = r.number("lambda", m.lambda);
      m.filter.iterations = r.count("filter_iterations", m.filter.iterations);
      m.filter.step = r.number("filter_step", m.filter.step);
      m.filter.size = r.count("filter_size", m.filter.size);
      m.filter.feature_bound = r.number("feature_bound", m.filter.feature_bound);
      m.labels.sigma_cells = r.number("label_sigma", m.labels.sigma_cells);
      const double t = r.number("threshold", m.labels.threshold);
      m.labels.threshold = m.filter.threshold = t;
    } else if (section.name == "train") {
      auto& t = train;
      t.epochs = r.count("epochs", t.epochs);
      t.pairs_per_epoch = r.count("pairs_per_epoch", t.pairs_per_epoch);
      t.learning_rate = r.number("learning_rate", t.learning_rate);
      t.lr_decay_factor = r.number("lr_decay_factor", t.lr_decay_factor);
      t.lr_decay_period_epochs = r.count("lr_decay_period", t.lr_decay_period_epochs);
      t.weight_decay = r.number("weight_decay", t.weight_decay);
      t.crop_factor = r.number("crop_factor", t.crop_factor);
      t.jitter_fraction = r.number("jitter", t.jitter_fraction);
      t.search_jitter_fraction = r.number("search_jitter", t.search_jitter_fraction);
      t.brightness_low = r.number("brightness_low", t.brightness_low);
      t.brightness_high = r.number("brightness_high", t.brightness_high);
      t.flip_probability = r.number("flip_probability", t.flip_probability);
      t.max_depth_mm = r.number("max_depth_mm", t.max_depth_mm);
      t.max_frame_gap = r.count("max_frame_gap", t.max_frame_gap);
    } else if (section.name == "tracker") {
      auto& k = tracker;
      k.init_samples = r.count("init_samples", k.init_samples);
      k.memory_capacity = r.count("memory_capacity", k.memory_capacity);
      k.confidence_gate = r.number("confidence_gate", k.confidence_gate);
      k.crop_factor = r.number("crop_factor", k.crop_factor);
      k.jitter_fraction = r.number("jitter", k.jitter_fraction);
      k.brightness_low = r.number("brightness_low", k.brightness_low);
      k.brightness_high = r.number("brightness_high", k.brightness_high);
      k.max_depth_mm = r.number("max_depth_mm", k.max_depth_mm);
    } else {
      continue;
    }
    r.finish();
  }
  try {
    validate();
  } catch (const ValueError& e) {
    throw UsageError(config.source + ": " + e.what());
  }
}

void Profile::validate() const {
  model.validate();
  train.validate();
  tracker.validate();
}

std::string Profile::describe() const {
  const auto& m = model;
  const auto& a = m.cmim.attention;
  std::ostringstream os;
  os << "profile = " << name << "\n"
     << "patch_size = " << m.backbone.input_size << "\n"
     << "downsample = " << m.backbone.downsample() << "\n"
     << "feature_size = " << m.backbone.feature_size() << "\n"
     << "channels = " << m.cmim.channels << "\n"
     << "inner_channels = " << m.cmim.inner << "\n"
     << "heads = " << a.heads << "\n"
     << "d_model = " << a.d_model << "\n"
     << "d_k = " << a.d_k << "\n"
     << "d_v = " << a.d_v << "\n"
     << "ffn_hidden = " << a.ffn_hidden << "\n"
     << "cma_layers = " << m.cmim.layers << "\n"
     << "fusion_mode = " << fusion::fusion_mode_name(m.fusion_mode) << "\n"
     << "cls_channels = " << m.cls_channels << "\n"
     << "lambda = " << m.lambda << "\n"
     << "threshold = " << m.labels.threshold << "\n"
     << "filter_iterations = " << m.filter.iterations << "\n"
     << "filter_step = " << m.filter.step << "\n"
     << "feature_bound = " << m.filter.feature_bound << "\n"
     << "spm_v_init = 0.01\n"
     << "spm_alpha_init = 0.5\n"
     << "spm_beta_init = 0.5\n"
     << "learning_rate = " << train.learning_rate << "\n"
     << "lr_decay_factor = " << train.lr_decay_factor << "\n"
     << "lr_decay_period = " << train.lr_decay_period_epochs << "\n"
     << "weight_decay = " << train.weight_decay << "\n"
     << "epochs = " << train.epochs << "\n"
     << "pairs_per_epoch = " << train.pairs_per_epoch << "\n"
     << "crop_factor = " << train.crop_factor << "\n"
     << "init_samples = " << tracker.init_samples << "\n"
     << "memory_capacity = " << tracker.memory_capacity << "\n"
     << "confidence_gate = " << tracker.confidence_gate << "\n";
  return os.str();
}

}  // namespace dmt::cli
