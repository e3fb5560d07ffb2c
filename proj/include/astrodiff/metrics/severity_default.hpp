#pragma once

// Generated by tools/fit_severity; do not edit by hand.

namespace astrodiff::met {

inline const SeverityModel& default_severity_model() {
  static const SeverityModel model = [] {
    SeverityModel m;
    m.bias = 58.181164635316193;
    m.weights = {6.1692263972563968, -8.7228681886544877, 0.94131042135843035, -1.6526553876387, -10.63233423490794, -1.9607092592033952, -1.2017794582335204, -0.076719711950467603, -1.6718143684693927, -2.9039852421139285, 0.67809827196339345, 0.0399354585471106, -2.4899259224659311, -2.362445114211019, 0.90420938459852529, -1.8392364012420193, 3.2287302674447131, -4.7284051182021987, -4.7910184657325772, 1.6616668186285966, 1.7726370075160964, -1.0634400286217678, -6.7035060635400754, 5.1942743802404143, -3.2294345116550391, 3.4117406002089439, -0.64133116728599615, 1.3530198364002635, 0.40659807862573305, 0.76558477073370768, 2.6265043089384279, 1.5252316207263994, 0.2064800398996339, -2.823910567552947, 4.1307545700298274, 1.2990198175347274};
    m.means = {0.66704322915328151, 0.043130325599375109, 0.3939391180480778, 6.1080996174044673, 0.0033889451252330323, 0.018167312287778008, 0.42178180754968975, 1.1035516097190667, 0.0059834638965565613, 0.011137484477196721, 0.42837090562832986, 0.50512800591097506, 0.0071677023852207934, 0.010355115441808813, 0.42811911231593081, 0.65870881508527457, 0.007270365673239544, 0.01049522854243894, 1.0037821661092747, 0.078971712386033746, 0.52342125444035736, 1.2814969047331075, 0.0054874610901154558, 0.029677286797905818, 0.58339183656008631, 0.20258085044610502, 0.015280611621032452, 0.018841671245591236, 0.58888709768652903, -0.060470043416062012, 0.019640956047737506, 0.017981586172492254, 0.58735497307620588, -0.083823705839295229, 0.020157846732500845, 0.018333678709016157};
    m.scales = {0.27276971073213346, 0.01646042960097667, 0.091537590666478721, 9.3734822502377817, 0.0036906630093440128, 0.013298415770622034, 0.096488593491532673, 2.1364579447552003, 0.0067077114530721118, 0.0067570892124032781, 0.10457896938202893, 1.5949560834207455, 0.0076477679050181661, 0.0067123832931137283, 0.10517088803157928, 1.8048686701421379, 0.0080732982346213913, 0.006629259426754258, 0.51301972513799421, 0.023506285347762855, 0.14861828963526746, 1.7108329976990666, 0.004646792426946109, 0.017334795182925918, 0.1718239223586997, 0.54321940171858463, 0.018110691466941425, 0.0098158431484043126, 0.18550443903354102, 0.59725596786689572, 0.022260825901488774, 0.011001227227137084, 0.18392218377861944, 0.70816899376401854, 0.024315968035529684, 0.010784827771364074};
    m.validate();
    return m;
  }();
  return model;
}

}  // namespace astrodiff::met
