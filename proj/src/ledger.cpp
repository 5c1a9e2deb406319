#include "fusionnet/ledger.hpp"

namespace fusionnet {

// Keep in sync with data/multifusionnet_ledger.csv (a unit test diffs them).
const std::string& multifusionnet_ledger_csv() {
    static const std::string csv = R"(# Expected rows for the full-scale m4 model summary (fusion head plus the
# backbone tap points it consumes). Columns: name,out_shape,params.
# '-' skips that column's check. The special names trainable_params /
# non_trainable_params / total_params check the summary totals.
name,out_shape,params
resnet/conv3_block1_1_relu,(28,28,128),-
resnet/conv4_block6_out,(7,7,1024),-
resnet/conv3_block4_out,(14,14,512),-
resnet/conv2_block3_out,(28,28,256),-
resnet/post_relu,(7,7,2048),-
inception/mixed9_3x3_1_relu,(5,5,384),-
inception/mixed9_3x3dbl_reduce_relu,(5,5,448),-
inception/mixed10_3x3_1_relu,(5,5,384),-
inception/mixed10_3x3dbl_reduce_relu,(5,5,448),-
inception/trunk_concat,(5,5,1920),0
max_pooling2d_36,(7,7,128),0
max_pooling2d_39,(7,7,512),0
max_pooling2d_37,(7,7,256),0
concatenate_18,(7,7,1920),0
concatenate_24,(5,5,1664),0
concatenate_19,(7,7,3968),0
concatenate_25,(5,5,3584),0
batch_norm_112,(7,7,3968),15872
batch_norm_115,(5,5,3584),14336
conv2d_102,(7,7,2048),8128512
conv2d_105,(5,5,2048),7342080
global_avg_pool2d_4,(2048),0
global_avg_pool2d_7,(2048),0
lambda_add,(2048),0
dense_2,(256),524544
dense_3,(3),771
trainable_params,-,16011011
non_trainable_params,-,45382688
total_params,-,61393699
)";
    return csv;
}

std::vector<LedgerRow> multifusionnet_ledger() { return parse_ledger_csv(multifusionnet_ledger_csv()); }

}  // namespace fusionnet
