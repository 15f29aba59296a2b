#pragma once

#include <cstdint>

#include "vfd/encoder/encoder.hpp"

namespace vfd::encoder {

// Twin encoders with disjoint parameters: spectrogram -> f_v, face -> f_f.
struct VfdModel {
  EncoderState voice;
  EncoderState face;

  static VfdModel create(const EncoderConfig& voice_config, const EncoderConfig& face_config,
                         std::uint64_t seed);

  // Every learnable tensor, voice first, names prefixed "voice." / "face.".
  num::ParameterList parameters() const;
  // Parameters minus the identity classifier heads.
  num::ParameterList encoder_parameters() const;
  VfdModel clone() const;
};

}  // namespace vfd::encoder
