use std::fmt;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Upper edge (inclusive) of the close-proximity band, in meters.
pub const CLOSE_PROXIMITY_M: f64 = 15.0;
/// Upper edge (inclusive) of the medium-proximity band, in meters.
pub const MEDIUM_PROXIMITY_M: f64 = 30.0;

macro_rules! tag_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} value `{}`", stringify!($name), other)),
                }
            }
        }
    };
}

tag_enum!(
    /// Roadway layout at the interaction site.
    Roadway { FourWay => "four_way", Midblock => "midblock", TJunction => "t_junction", Other => "other" }
);

tag_enum!(
    /// Traffic-light state; `None` for unsignalised sites.
    TrafficLight { Red => "red", Yellow => "yellow", Green => "green", None => "none" }
);

tag_enum!(
    Crosswalk { Zebra => "zebra", NonZebra => "non_zebra" }
);

tag_enum!(
    /// Pedestrian–ego distance band.
    Proximity { Close => "close", Medium => "medium", Far => "far" }
);

tag_enum!(
    /// Ego-vehicle speed regime over the observation window.
    SpeedState {
        Accelerating => "accelerating",
        Constant => "constant",
        Stopped => "stopped",
        Decelerating => "decelerating",
    }
);

/// One value per context axis for a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextTags {
    pub roadway: Roadway,
    pub light: TrafficLight,
    pub crosswalk: Crosswalk,
    pub proximity: Proximity,
    pub ego_speed_state: SpeedState,
}

/// Bucket a mean pedestrian distance: close = (0, 15], medium = (15, 30],
/// far = (30, inf).
pub fn proximity_bucket(mean_distance: f64) -> Result<Proximity, DatasetError> {
    if !(mean_distance > 0.0) || !mean_distance.is_finite() {
        return Err(DatasetError::NonPositiveDistance(mean_distance));
    }
    Ok(if mean_distance <= CLOSE_PROXIMITY_M {
        Proximity::Close
    } else if mean_distance <= MEDIUM_PROXIMITY_M {
        Proximity::Medium
    } else {
        Proximity::Far
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proximity_boundaries_are_closed_on_the_right() {
        assert_eq!(proximity_bucket(10.0).unwrap(), Proximity::Close);
        assert_eq!(proximity_bucket(15.0).unwrap(), Proximity::Close);
        assert_eq!(proximity_bucket(15.000001).unwrap(), Proximity::Medium);
        assert_eq!(proximity_bucket(30.0).unwrap(), Proximity::Medium);
        assert_eq!(proximity_bucket(30.0001).unwrap(), Proximity::Far);
        assert_eq!(proximity_bucket(1e-9).unwrap(), Proximity::Close);
    }

    #[test]
    fn proximity_rejects_non_positive() {
        for d in [0.0, -3.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                proximity_bucket(d),
                Err(DatasetError::NonPositiveDistance(_))
            ));
        }
    }

    #[test]
    fn tag_names_round_trip() {
        for r in Roadway::ALL {
            assert_eq!(r.as_str().parse::<Roadway>().unwrap(), *r);
        }
        let json = serde_json::to_string(&SpeedState::Decelerating).unwrap();
        assert_eq!(json, "\"decelerating\"");
        assert!("sideways".parse::<SpeedState>().is_err());
    }
}
