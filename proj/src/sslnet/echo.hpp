#pragma once

#include "json.hpp"
#include "wafertopo/sslnet.hpp"

namespace wafertopo::sslnet::detail {

using json = nlohmann::json;

json arch_to_json(const EncoderArch& a);
EncoderArch arch_from_json(const json& j);
json config_to_json(const TrainConfig& c);
json augmentation_to_json(const AugmentationSpec& s);

}  // namespace wafertopo::sslnet::detail
