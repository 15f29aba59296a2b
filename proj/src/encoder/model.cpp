#include "vfd/encoder/model.hpp"

#include <algorithm>

namespace vfd::encoder {

VfdModel VfdModel::create(const EncoderConfig& voice_config, const EncoderConfig& face_config,
                          std::uint64_t seed) {
  const num::Rng root(seed);
  num::Rng voice_rng = root.fork(1);
  num::Rng face_rng = root.fork(2);
  VfdModel model;
  model.voice = init_encoder(voice_config, voice_rng);
  model.face = init_encoder(face_config, face_rng);
  return model;
}

num::ParameterList VfdModel::parameters() const {
  num::ParameterList out = voice.parameters("voice.");
  num::ParameterList face_params = face.parameters("face.");
  out.insert(out.end(), face_params.begin(), face_params.end());
  return out;
}

num::ParameterList VfdModel::encoder_parameters() const {
  num::ParameterList out = parameters();
  std::erase_if(out, [](const num::NamedParameter& p) {
    return p.name.ends_with(".classifier");
  });
  return out;
}

VfdModel VfdModel::clone() const { return VfdModel{voice.clone(), face.clone()}; }

}  // namespace vfd::encoder
