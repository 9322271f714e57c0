/** Wire types mirroring the recommendation service. */

export interface ServiceMeta {
  schema_version: number;
  bundle_version: string;
  rank: number;
  sequence_length: number;
  calorie_range: [number, number];
  sports: string[];
}

export interface RouteSummary {
  route_id: string;
  total_km: number;
  cluster_id: number;
}

export interface RouteProfile {
  route_id: string;
  altitude_seq: number[];
  distance_seq: number[];
}

export interface RecommendRequest {
  user_id: string;
  route_id: string;
  sport: string;
  target_calories: number;
  gender?: string | null;
}

export interface RecommendResponse {
  predicted_distance_km: number;
  speed_seq: number[];
  heartrate_seq: number[];
  speed_avg_kmh: number;
  heartrate_avg_bpm: number;
  request: RecommendRequest;
  bundle_version: string;
}

export interface ApiError {
  code: string;
  field: string;
  message: string;
}

export interface Scenario {
  id: number;
  color: string;
  request: RecommendRequest;
  response: RecommendResponse;
}
