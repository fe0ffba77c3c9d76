import { ApiClient } from "./api.js";
import { ViewerApp } from "./app.js";

const baseUrl =
  new URLSearchParams(window.location.search).get("service") ??
  "http://127.0.0.1:8077";

const app = new ViewerApp(new ApiClient(baseUrl));
void app.start();
