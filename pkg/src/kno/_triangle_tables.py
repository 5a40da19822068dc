"""Symmetric positive-weight triangle rules (generated by
scripts/generate_triangle_rules.py; do not edit by hand).

Each entry maps degree -> (barycentric points, weights summing to 1).
"""

TRIANGLE_RULES = {
    1: (
        [
            (0.3333333333333333, 0.3333333333333333, 0.3333333333333333),
        ],
        [
            1.0,
        ],
    ),
    2: (
        [
            (0.1666666666666667, 0.1666666666666667, 0.6666666666666665),
            (0.1666666666666667, 0.6666666666666665, 0.1666666666666667),
            (0.6666666666666665, 0.1666666666666667, 0.1666666666666667),
        ],
        [
            0.3333333333333333,
            0.3333333333333333,
            0.3333333333333333,
        ],
    ),
    3: (
        [
            (0.15776374405793125, 0.15776374405793125, 0.6844725118841375),
            (0.15776374405793125, 0.6844725118841375, 0.15776374405793125),
            (0.6844725118841375, 0.15776374405793125, 0.15776374405793125),
            (0.46433457540152595, 0.46433457540152595, 0.0713308491969481),
            (0.46433457540152595, 0.0713308491969481, 0.46433457540152595),
            (0.0713308491969481, 0.46433457540152595, 0.46433457540152595),
        ],
        [
            0.25900061774217803,
            0.25900061774217803,
            0.25900061774217803,
            0.07433271559115524,
            0.07433271559115524,
            0.07433271559115524,
        ],
    ),
    4: (
        [
            (0.09157621350977085, 0.09157621350977085, 0.8168475729804583),
            (0.09157621350977085, 0.8168475729804583, 0.09157621350977085),
            (0.8168475729804583, 0.09157621350977085, 0.09157621350977085),
            (0.4459484909159649, 0.4459484909159649, 0.10810301816807022),
            (0.4459484909159649, 0.10810301816807022, 0.4459484909159649),
            (0.10810301816807022, 0.4459484909159649, 0.4459484909159649),
        ],
        [
            0.10995174365532201,
            0.10995174365532201,
            0.10995174365532201,
            0.22338158967801133,
            0.22338158967801133,
            0.22338158967801133,
        ],
    ),
    5: (
        [
            (0.3333333333333333, 0.3333333333333333, 0.3333333333333333),
            (0.4701420641051152, 0.4701420641051152, 0.05971587178976956),
            (0.4701420641051152, 0.05971587178976956, 0.4701420641051152),
            (0.05971587178976956, 0.4701420641051152, 0.4701420641051152),
            (0.10128650732345638, 0.10128650732345638, 0.7974269853530872),
            (0.10128650732345638, 0.7974269853530872, 0.10128650732345638),
            (0.7974269853530872, 0.10128650732345638, 0.10128650732345638),
        ],
        [
            0.22500000000000092,
            0.1323941527885057,
            0.1323941527885057,
            0.1323941527885057,
            0.1259391805448273,
            0.1259391805448273,
            0.1259391805448273,
        ],
    ),
    6: (
        [
            (0.06308901449149434, 0.06308901449149434, 0.8738219710170113),
            (0.06308901449149434, 0.8738219710170113, 0.06308901449149434),
            (0.8738219710170113, 0.06308901449149434, 0.06308901449149434),
            (0.24928674517094718, 0.24928674517094718, 0.5014265096581056),
            (0.24928674517094718, 0.5014265096581056, 0.24928674517094718),
            (0.5014265096581056, 0.24928674517094718, 0.24928674517094718),
            (0.31035245103375564, 0.05314504984484357, 0.6365024991214008),
            (0.31035245103375564, 0.6365024991214008, 0.05314504984484357),
            (0.05314504984484357, 0.31035245103375564, 0.6365024991214008),
            (0.05314504984484357, 0.6365024991214008, 0.31035245103375564),
            (0.6365024991214008, 0.31035245103375564, 0.05314504984484357),
            (0.6365024991214008, 0.05314504984484357, 0.31035245103375564),
        ],
        [
            0.05084490637019563,
            0.05084490637019563,
            0.05084490637019563,
            0.11678627572631661,
            0.11678627572631661,
            0.11678627572631661,
            0.08285107561841053,
            0.08285107561841053,
            0.08285107561841053,
            0.08285107561841053,
            0.08285107561841053,
            0.08285107561841053,
        ],
    ),
    7: (
        [
            (0.18786045959666958, 0.18786045959666958, 0.6242790808066608),
            (0.18786045959666958, 0.6242790808066608, 0.18786045959666958),
            (0.6242790808066608, 0.18786045959666958, 0.18786045959666958),
            (0.060630129414298704, 0.060630129414298704, 0.8787397411714026),
            (0.060630129414298704, 0.8787397411714026, 0.060630129414298704),
            (0.8787397411714026, 0.060630129414298704, 0.060630129414298704),
            (0.41163818024396726, 0.41163818024396726, 0.1767236395120655),
            (0.41163818024396726, 0.1767236395120655, 0.41163818024396726),
            (0.1767236395120655, 0.41163818024396726, 0.41163818024396726),
            (0.03224004775240047, 0.3129303996731877, 0.6548295525744118),
            (0.03224004775240047, 0.6548295525744118, 0.3129303996731877),
            (0.3129303996731877, 0.03224004775240047, 0.6548295525744118),
            (0.3129303996731877, 0.6548295525744118, 0.03224004775240047),
            (0.6548295525744118, 0.03224004775240047, 0.3129303996731877),
            (0.6548295525744118, 0.3129303996731877, 0.03224004775240047),
        ],
        [
            0.07413504623628352,
            0.07413504623628352,
            0.07413504623628352,
            0.04661060357196065,
            0.04661060357196065,
            0.04661060357196065,
            0.10142862780370385,
            0.10142862780370385,
            0.10142862780370385,
            0.055579527860692673,
            0.055579527860692673,
            0.055579527860692673,
            0.055579527860692673,
            0.055579527860692673,
            0.055579527860692673,
        ],
    ),
    8: (
        [
            (0.3333333333333333, 0.3333333333333333, 0.3333333333333333),
            (0.05054722831703424, 0.05054722831703424, 0.8989055433659315),
            (0.05054722831703424, 0.8989055433659315, 0.05054722831703424),
            (0.8989055433659315, 0.05054722831703424, 0.05054722831703424),
            (0.45929258829271047, 0.45929258829271047, 0.08141482341457906),
            (0.45929258829271047, 0.08141482341457906, 0.45929258829271047),
            (0.08141482341457906, 0.45929258829271047, 0.45929258829271047),
            (0.17056930775174733, 0.17056930775174733, 0.6588613844965053),
            (0.17056930775174733, 0.6588613844965053, 0.17056930775174733),
            (0.6588613844965053, 0.17056930775174733, 0.17056930775174733),
            (0.008394777409935062, 0.2631128296346963, 0.7284923929553686),
            (0.008394777409935062, 0.7284923929553686, 0.2631128296346963),
            (0.2631128296346963, 0.008394777409935062, 0.7284923929553686),
            (0.2631128296346963, 0.7284923929553686, 0.008394777409935062),
            (0.7284923929553686, 0.008394777409935062, 0.2631128296346963),
            (0.7284923929553686, 0.2631128296346963, 0.008394777409935062),
        ],
        [
            0.14431560767776694,
            0.032458497623203277,
            0.032458497623203277,
            0.032458497623203277,
            0.09509163426729271,
            0.09509163426729271,
            0.09509163426729271,
            0.10321737053472493,
            0.10321737053472493,
            0.10321737053472493,
            0.027230314174428377,
            0.027230314174428377,
            0.027230314174428377,
            0.027230314174428377,
            0.027230314174428377,
            0.027230314174428377,
        ],
    ),
    9: (
        [
            (0.3333333333333333, 0.3333333333333333, 0.3333333333333333),
            (0.4896825191830628, 0.4896825191830628, 0.02063496163387435),
            (0.4896825191830628, 0.02063496163387435, 0.4896825191830628),
            (0.02063496163387435, 0.4896825191830628, 0.4896825191830628),
            (0.04472951339548569, 0.04472951339548569, 0.9105409732090286),
            (0.04472951339548569, 0.9105409732090286, 0.04472951339548569),
            (0.9105409732090286, 0.04472951339548569, 0.04472951339548569),
            (0.18820353560947192, 0.18820353560947192, 0.6235929287810562),
            (0.18820353560947192, 0.6235929287810562, 0.18820353560947192),
            (0.6235929287810562, 0.18820353560947192, 0.18820353560947192),
            (0.4370895914683252, 0.4370895914683252, 0.12582081706334958),
            (0.4370895914683252, 0.12582081706334958, 0.4370895914683252),
            (0.12582081706334958, 0.4370895914683252, 0.4370895914683252),
            (0.7411985987833555, 0.036838412050527236, 0.22196298916611729),
            (0.7411985987833555, 0.22196298916611729, 0.036838412050527236),
            (0.036838412050527236, 0.7411985987833555, 0.22196298916611729),
            (0.036838412050527236, 0.22196298916611729, 0.7411985987833555),
            (0.22196298916611729, 0.7411985987833555, 0.036838412050527236),
            (0.22196298916611729, 0.036838412050527236, 0.7411985987833555),
        ],
        [
            0.09713579624879308,
            0.03133470025532058,
            0.03133470025532058,
            0.03133470025532058,
            0.025577675659849933,
            0.025577675659849933,
            0.025577675659849933,
            0.07964773892745762,
            0.07964773892745762,
            0.07964773892745762,
            0.07782754099406193,
            0.07782754099406193,
            0.07782754099406193,
            0.04328353937352276,
            0.04328353937352276,
            0.04328353937352276,
            0.04328353937352276,
            0.04328353937352276,
            0.04328353937352276,
        ],
    ),
    10: (
        [
            (0.3333333333333333, 0.3333333333333333, 0.3333333333333333),
            (0.14216110105927868, 0.14216110105927868, 0.7156777978814426),
            (0.14216110105927868, 0.7156777978814426, 0.14216110105927868),
            (0.7156777978814426, 0.14216110105927868, 0.14216110105927868),
            (0.0320553732165769, 0.0320553732165769, 0.9358892535668462),
            (0.0320553732165769, 0.9358892535668462, 0.0320553732165769),
            (0.9358892535668462, 0.0320553732165769, 0.0320553732165769),
            (0.16370173373512856, 0.028367665340683003, 0.8079306009241884),
            (0.16370173373512856, 0.8079306009241884, 0.028367665340683003),
            (0.028367665340683003, 0.16370173373512856, 0.8079306009241884),
            (0.028367665340683003, 0.8079306009241884, 0.16370173373512856),
            (0.8079306009241884, 0.16370173373512856, 0.028367665340683003),
            (0.8079306009241884, 0.028367665340683003, 0.16370173373512856),
            (0.5300541189241045, 0.32181299529058277, 0.14813288578531275),
            (0.5300541189241045, 0.14813288578531275, 0.32181299529058277),
            (0.32181299529058277, 0.5300541189241045, 0.14813288578531275),
            (0.32181299529058277, 0.14813288578531275, 0.5300541189241045),
            (0.14813288578531275, 0.5300541189241045, 0.32181299529058277),
            (0.14813288578531275, 0.32181299529058277, 0.5300541189241045),
            (0.029619889489162273, 0.3691467818262872, 0.6012333286845506),
            (0.029619889489162273, 0.6012333286845506, 0.3691467818262872),
            (0.3691467818262872, 0.029619889489162273, 0.6012333286845506),
            (0.3691467818262872, 0.6012333286845506, 0.029619889489162273),
            (0.6012333286845506, 0.029619889489162273, 0.3691467818262872),
            (0.6012333286845506, 0.3691467818262872, 0.029619889489162273),
        ],
        [
            0.08174332914396991,
            0.04595796360561799,
            0.04595796360561799,
            0.04595796360561799,
            0.013352968812837967,
            0.013352968812837967,
            0.013352968812837967,
            0.02529775770771825,
            0.02529775770771825,
            0.02529775770771825,
            0.02529775770771825,
            0.02529775770771825,
            0.02529775770771825,
            0.06390490639531379,
            0.06390490639531379,
            0.06390490639531379,
            0.06390490639531379,
            0.06390490639531379,
            0.06390490639531379,
            0.03418464816374499,
            0.03418464816374499,
            0.03418464816374499,
            0.03418464816374499,
            0.03418464816374499,
            0.03418464816374499,
        ],
    ),
}
